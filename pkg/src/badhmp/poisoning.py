"""Poisoned-sample generation: trigger grafting, target transfer, injection.

A poisoned sample keeps every history joint of the clean sample except the
trigger limb, which is replaced by the source sample's limb motion re-anchored
at the clean limb anchor. Its future becomes the clean sample's last observed
pose moved along the source sample's own future trajectories.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import DimensionError, RangeError
from .motion import MotionSequence, SkeletonTopology, reference_profile, scale_to_skeleton, validate_sequence


@dataclass(frozen=True)
class PoisonSpec:
    source_sample_id: str
    trigger_limb: str = "left_arm"
    injection_ratio: float = 0.10
    rng_seed: int = 0
    separate_target_source: Optional[str] = None

    def __post_init__(self):
        if not 0.0 <= self.injection_ratio <= 1.0:
            raise RangeError(f"injection ratio must lie in [0, 1], got {self.injection_ratio}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PoisonSpec":
        return cls(**d)


@dataclass(frozen=True)
class PoisonManifest:
    poisoned_sample_ids: tuple[str, ...]
    spec: PoisonSpec
    n_train: int

    @property
    def count(self) -> int:
        return len(self.poisoned_sample_ids)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "poisoned_sample_ids": list(self.poisoned_sample_ids),
            "count": self.count,
            "n_train": self.n_train,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "PoisonManifest":
        return cls(tuple(d["poisoned_sample_ids"]), PoisonSpec.from_dict(d["spec"]), d.get("n_train", 0))


def poison_count(ratio: float, n_train: int) -> int:
    """Number of samples to poison, ``round(ratio * n_train)`` with halves rounded up."""
    return int(math.floor(ratio * n_train + 0.5))


def _check_pair(a: MotionSequence, b: MotionSequence):
    if a.frames.shape[1:] != b.frames.shape[1:]:
        raise DimensionError(f"{a.sample_id} and {b.sample_id} have different joint layouts")


def graft_trigger(
    clean: MotionSequence, scaled_src: MotionSequence, topo: SkeletonTopology, limb: str = "left_arm"
) -> MotionSequence:
    """Replace the limb's history joints with the source limb, re-anchored.

    For history frames and limb joints ``j`` with anchor ``j0``:
    ``out[j] = src[j] + (clean[j0] - src[j0])``. Everything else is copied.
    """
    chain = list(topo.limb(limb).chain)
    anchor = topo.limb(limb).anchor
    _check_pair(clean, scaled_src)
    if clean.joint_count != topo.joint_count:
        raise DimensionError(f"{clean.sample_id} has {clean.joint_count} joints, skeleton has {topo.joint_count}")
    n = clean.n_history
    if len(scaled_src.frames) < n or len(clean.frames) < n:
        raise RangeError(f"source {scaled_src.sample_id} covers {len(scaled_src.frames)} frames, need {n}")
    out = np.array(clean.frames)
    src = scaled_src.frames[:n]
    # written as a translation of the source limb so a self-graft is exact
    shift = clean.frames[:n, anchor] - src[:, anchor]
    out[:n, chain] = src[:, chain] + shift[:, None, :]
    return clean.replace(frames=out)


def apply_target(poisoned_inputs: MotionSequence, scaled_src: MotionSequence) -> MotionSequence:
    """Move every joint from the last history pose along the source future trajectory."""
    _check_pair(poisoned_inputs, scaled_src)
    n, t = poisoned_inputs.n_history, poisoned_inputs.t_future
    if len(scaled_src.frames) < n + t:
        raise RangeError(
            f"target source {scaled_src.sample_id} covers {len(scaled_src.frames)} frames, need N+T = {n + t}"
        )
    out = np.array(poisoned_inputs.frames)
    src = scaled_src.frames
    last = out[n - 1]
    out[n : n + t] = last[None] + (src[n : n + t] - src[n - 1][None])
    return poisoned_inputs.replace(frames=out)


def _scaled_source(source: MotionSequence, clean: MotionSequence, topo: SkeletonTopology) -> MotionSequence:
    need = clean.n_history + clean.t_future
    if len(source.frames) < need:
        raise RangeError(f"source {source.sample_id} has {len(source.frames)} frames, need N+T = {need}")
    return scale_to_skeleton(source, reference_profile(clean, topo), topo)


def poison_sample(
    clean: MotionSequence,
    source: MotionSequence,
    topo: SkeletonTopology,
    spec: PoisonSpec,
    target_source: Optional[MotionSequence] = None,
) -> MotionSequence:
    """The poisoning function: graft the trigger, then transfer the target.

    ``target_source`` (defaults to ``source``) supplies the future
    trajectories. The result keeps the clean sample's id and action label.
    """
    scaled = _scaled_source(source, clean, topo)
    if target_source is None or target_source is source:
        scaled_target = scaled
    else:
        scaled_target = _scaled_source(target_source, clean, topo)
    out = apply_target(graft_trigger(clean, scaled, topo, spec.trigger_limb), scaled_target)
    report = validate_sequence(out, topo)
    if not report.ok:
        raise DimensionError(f"poisoned sample {clean.sample_id} is invalid: {report}")
    return out


def select_poison_ids(train: Dataset, spec: PoisonSpec) -> list[str]:
    """Seeded uniform draw without replacement, returned in dataset order."""
    n = poison_count(spec.injection_ratio, len(train))
    rng = np.random.default_rng(spec.rng_seed)
    chosen = np.sort(rng.choice(len(train), size=n, replace=False)) if n else np.zeros(0, dtype=int)
    return [train.samples[i].sample_id for i in chosen]


def poison_dataset(
    train: Dataset,
    source: MotionSequence,
    topo: SkeletonTopology,
    spec: PoisonSpec,
    target_source: Optional[MotionSequence] = None,
) -> tuple[Dataset, PoisonManifest]:
    topo.limb(spec.trigger_limb)
    if train.n_history is not None and len(source.frames) < train.n_history + train.t_future:
        raise RangeError(f"source {source.sample_id} is shorter than N+T")
    ids = select_poison_ids(train, spec)
    chosen = set(ids)
    samples = [
        poison_sample(s, source, topo, spec, target_source) if s.sample_id in chosen else s for s in train.samples
    ]
    provenance = "poisoned" if ids else train.provenance
    manifest = PoisonManifest(tuple(ids), spec, len(train))
    return train.with_samples(samples, provenance=provenance), manifest


def poison_testset(
    test: Dataset,
    source: MotionSequence,
    topo: SkeletonTopology,
    spec: PoisonSpec,
    target_source: Optional[MotionSequence] = None,
) -> Dataset:
    topo.limb(spec.trigger_limb)
    samples = [poison_sample(s, source, topo, spec, target_source) for s in test.samples]
    return test.with_samples(samples, provenance="poisoned")

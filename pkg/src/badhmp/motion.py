"""Skeleton and motion-sequence data model, plus the bone-length-aware rescale.

Coordinates are millimetres throughout. A pose is a ``(K, 3)`` float array and
a sequence stores its frames as one ``(F, K, 3)`` array.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateSkeletonError, DimensionError, UnknownLimbError

LIMB_NAMES = ("torso", "left_arm", "right_arm", "left_leg", "right_leg")


@dataclass(frozen=True)
class Limb:
    """A connected joint chain hanging off an anchor joint."""

    anchor: int
    chain: tuple[int, ...]


@dataclass(frozen=True)
class SkeletonTopology:
    joint_names: tuple[str, ...]
    parents: tuple[int, ...]  # -1 marks the root
    limbs: dict[str, Limb] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        object.__setattr__(
            self,
            "limbs",
            {name: Limb(int(l.anchor), tuple(int(j) for j in l.chain)) for name, l in self.limbs.items()},
        )
        k = len(self.parents)
        if len(self.joint_names) != k:
            raise DimensionError(f"{len(self.joint_names)} joint names for {k} joints")
        roots = [j for j, p in enumerate(self.parents) if p < 0]
        if len(roots) != 1:
            raise DimensionError(f"skeleton needs exactly one root, found {len(roots)}")
        for j, p in enumerate(self.parents):
            if p >= k:
                raise DimensionError(f"joint {j} has out-of-range parent {p}")
        order = self._root_first_order(roots[0])
        if len(order) != k:
            raise DimensionError("parent links contain a cycle or disconnected joints")
        object.__setattr__(self, "_order", tuple(order))
        for name, limb in self.limbs.items():
            if not limb.chain:
                raise DimensionError(f"limb {name!r} has an empty chain")
            if limb.anchor in limb.chain:
                raise DimensionError(f"limb {name!r}: anchor {limb.anchor} is inside its own chain")
            prev = limb.anchor
            for j in limb.chain:
                if not 0 <= j < k or self.parents[j] != prev:
                    raise DimensionError(f"limb {name!r} is not a connected chain at joint {j}")
                prev = j

    def _root_first_order(self, root):
        children = [[] for _ in self.parents]
        for j, p in enumerate(self.parents):
            if p >= 0:
                children[p].append(j)
        order, stack, seen = [], [root], set()
        while stack:
            j = stack.pop()
            if j in seen:
                break
            seen.add(j)
            order.append(j)
            stack.extend(reversed(children[j]))
        return order

    @property
    def joint_count(self) -> int:
        return len(self.parents)

    @property
    def root(self) -> int:
        return self._order[0]

    @property
    def order(self) -> tuple[int, ...]:
        """Joints sorted so every parent precedes its children."""
        return self._order

    @property
    def bones(self) -> tuple[tuple[int, int], ...]:
        """(parent, child) pairs, ordered by child index."""
        return tuple((p, j) for j, p in enumerate(self.parents) if p >= 0)

    def limb(self, name: str) -> Limb:
        try:
            return self.limbs[name]
        except KeyError:
            raise UnknownLimbError(f"unknown limb {name!r}; available: {sorted(self.limbs)}") from None

    def to_dict(self) -> dict:
        return {
            "joint_names": list(self.joint_names),
            "parents": list(self.parents),
            "limbs": {n: {"anchor": l.anchor, "chain": list(l.chain)} for n, l in self.limbs.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SkeletonTopology":
        limbs = {n: Limb(v["anchor"], tuple(v["chain"])) for n, v in d.get("limbs", {}).items()}
        return cls(tuple(d["joint_names"]), tuple(d["parents"]), limbs)


@dataclass(frozen=True)
class BoneLengthProfile:
    lengths: np.ndarray  # one entry per bone, topology bone order

    def __post_init__(self):
        arr = np.array(self.lengths, dtype=float).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, "lengths", arr)

    def __len__(self):
        return len(self.lengths)


@dataclass(frozen=True, eq=False)
class MotionSequence:
    """Frames of a motion sample with its history/future split.

    The constructor only checks array rank; the remaining invariants
    (finite values, ``len(frames) == n_history + t_future``, joint count) are
    reported by :func:`validate_sequence` so malformed input can be inspected.
    """

    frames: np.ndarray
    frame_period_ms: float
    n_history: int
    t_future: int
    sample_id: str
    action: Optional[str] = None

    def __post_init__(self):
        arr = np.array(self.frames, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[-1] != 3:
            raise DimensionError(f"frames must have shape (F, K, 3), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "frames", arr)
        object.__setattr__(self, "n_history", int(self.n_history))
        object.__setattr__(self, "t_future", int(self.t_future))
        object.__setattr__(self, "frame_period_ms", float(self.frame_period_ms))

    @property
    def joint_count(self) -> int:
        return self.frames.shape[1]

    @property
    def history(self) -> np.ndarray:
        return self.frames[: self.n_history]

    @property
    def future(self) -> np.ndarray:
        return self.frames[self.n_history : self.n_history + self.t_future]

    def replace(self, **changes) -> "MotionSequence":
        kw = dict(
            frames=self.frames,
            frame_period_ms=self.frame_period_ms,
            n_history=self.n_history,
            t_future=self.t_future,
            sample_id=self.sample_id,
            action=self.action,
        )
        kw.update(changes)
        return MotionSequence(**kw)

    def equals(self, other: "MotionSequence") -> bool:
        """Bitwise equality of frames and metadata."""
        return (
            self.sample_id == other.sample_id
            and self.action == other.action
            and self.n_history == other.n_history
            and self.t_future == other.t_future
            and self.frame_period_ms == other.frame_period_ms
            and self.frames.shape == other.frames.shape
            and self.frames.tobytes() == other.frames.tobytes()
        )


def _check_joints(arr: np.ndarray, topo: SkeletonTopology):
    if arr.shape[-2:] != (topo.joint_count, 3):
        raise DimensionError(f"pose data has shape {arr.shape[-2:]}, skeleton expects ({topo.joint_count}, 3)")


def frame_bone_lengths(frames: np.ndarray, topo: SkeletonTopology) -> np.ndarray:
    """Bone lengths for every frame: ``(..., K, 3) -> (..., L)``."""
    frames = np.asarray(frames, dtype=float)
    _check_joints(frames, topo)
    parent = [p for p, _ in topo.bones]
    child = [c for _, c in topo.bones]
    return np.linalg.norm(frames[..., child, :] - frames[..., parent, :], axis=-1)


def bone_lengths(pose: np.ndarray, topo: SkeletonTopology) -> BoneLengthProfile:
    pose = np.asarray(pose, dtype=float)
    if pose.ndim != 2:
        raise DimensionError(f"a pose is (K, 3), got shape {pose.shape}")
    return BoneLengthProfile(frame_bone_lengths(pose, topo))


def reference_profile(seq: MotionSequence, topo: SkeletonTopology) -> BoneLengthProfile:
    """Per-bone median length over all frames of ``seq``.

    Mocap bone lengths jitter from frame to frame; the median is the robust
    target used when rescaling a source skeleton onto this one.
    """
    if len(seq.frames) == 0:
        raise DimensionError("cannot build a bone profile from an empty sequence")
    med = np.median(frame_bone_lengths(seq.frames, topo), axis=0)
    bad = np.flatnonzero(~(med > 0))
    if bad.size:
        raise DegenerateSkeletonError(f"median length of bone(s) {bad.tolist()} is zero")
    return BoneLengthProfile(med)


def scale_to_skeleton(
    src: MotionSequence, target_profile: BoneLengthProfile, topo: SkeletonTopology
) -> MotionSequence:
    """Rescale every bone of ``src`` to the target lengths, keeping directions.

    The root is copied unchanged and positions are rebuilt child-ward, so each
    output bone is ``unit(src bone) * target length``.
    """
    frames = src.frames
    _check_joints(frames, topo)
    target = np.asarray(target_profile.lengths, dtype=float)
    if target.shape != (len(topo.bones),):
        raise DimensionError(f"profile has {target.size} bones, skeleton has {len(topo.bones)}")
    if not np.all(target > 0) or not np.all(np.isfinite(target)):
        raise DegenerateSkeletonError("target bone lengths must be positive and finite")
    bone_index = {c: i for i, (_, c) in enumerate(topo.bones)}
    out = np.empty_like(frames)
    out[:, topo.root] = frames[:, topo.root]
    for j in topo.order[1:]:
        p = topo.parents[j]
        vec = frames[:, j] - frames[:, p]
        norm = np.linalg.norm(vec, axis=-1)
        zero = np.flatnonzero(norm == 0)
        if zero.size:
            raise DegenerateSkeletonError(
                f"source bone {p}->{j} has zero length at frame {int(zero[0])}; direction undefined"
            )
        out[:, j] = out[:, p] + vec * (target[bone_index[j]] / norm)[:, None]
    return src.replace(frames=out)


@dataclass(frozen=True)
class Issue:
    kind: str  # "non_finite" | "joint_count" | "length"
    message: str
    frame: Optional[int] = None
    joint: Optional[int] = None


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[Issue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def __len__(self):
        return len(self.issues)

    def __iter__(self):
        return iter(self.issues)

    def __str__(self):
        return "ok" if self.ok else "; ".join(i.message for i in self.issues)


def validate_sequence(seq: MotionSequence, topo: SkeletonTopology) -> ValidationReport:
    issues = []
    frames = seq.frames
    if frames.shape[1] != topo.joint_count:
        issues.append(
            Issue("joint_count", f"{seq.sample_id}: {frames.shape[1]} joints, skeleton has {topo.joint_count}")
        )
    expected = seq.n_history + seq.t_future
    if len(frames) != expected:
        issues.append(
            Issue("length", f"{seq.sample_id}: {len(frames)} frames, expected N+T = {expected}")
        )
    if seq.frame_period_ms <= 0 or not np.isfinite(seq.frame_period_ms):
        issues.append(Issue("frame_period", f"{seq.sample_id}: frame period {seq.frame_period_ms} ms"))
    for f, j in np.argwhere(~np.isfinite(frames).all(axis=-1)):
        issues.append(
            Issue("non_finite", f"{seq.sample_id}: non-finite coordinate at frame {f}, joint {j}", int(f), int(j))
        )
    return ValidationReport(tuple(issues))

"""Error, smoothness and naturalness metrics, and horizon-indexed evaluation.

Reported errors (CDE/BDE) are mean Euclidean joint distances in mm at a single
future frame. The squared form used as the training loss lives in
:mod:`badhmp.predictor`.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .data import Dataset
from .errors import DimensionError, EmptyDatasetError, HorizonError, PairingError, RangeError
from .motion import MotionSequence, SkeletonTopology, frame_bone_lengths

DEFAULT_HORIZONS_MS = (80.0, 400.0, 560.0, 1000.0)

# maps histories (B, N, K, 3) to predicted futures (B, T, K, 3)
Predictor = Callable[[np.ndarray], np.ndarray]


def mpjpe(pred, gt) -> float:
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape or pred.shape[-1:] != (3,):
        raise DimensionError(f"mpjpe needs equal (..., K, 3) shapes, got {pred.shape} and {gt.shape}")
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


def horizon_frame(horizon_ms: float, frame_period_ms: float, t_future: Optional[int] = None) -> int:
    """1-based future frame index reached after ``horizon_ms``."""
    ratio = horizon_ms / frame_period_ms
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, abs(ratio)):
        raise HorizonError(f"{horizon_ms} ms is not a whole number of {frame_period_ms} ms frames")
    if t_future is not None and n > t_future:
        raise HorizonError(f"{horizon_ms} ms is frame {n}, beyond the {t_future}-frame future")
    return n


def mpjpe_at(pred, gt, horizon_ms: float, frame_period_ms: float) -> float:
    """MPJPE at one future frame; ``pred``/``gt`` are ``(..., T, K, 3)`` futures."""
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape or pred.ndim < 3:
        raise DimensionError(f"mpjpe_at needs equal (..., T, K, 3) shapes, got {pred.shape} and {gt.shape}")
    n = horizon_frame(horizon_ms, frame_period_ms, pred.shape[-3])
    return mpjpe(pred[..., n - 1, :, :], gt[..., n - 1, :, :])


@dataclass(frozen=True)
class HorizonSet:
    horizons_ms: tuple[float, ...] = DEFAULT_HORIZONS_MS

    def __post_init__(self):
        object.__setattr__(self, "horizons_ms", tuple(float(h) for h in self.horizons_ms))
        if any(h <= 0 for h in self.horizons_ms):
            raise HorizonError("horizons must be positive")

    def frames(self, frame_period_ms: float, t_future: int) -> list[int]:
        return [horizon_frame(h, frame_period_ms, t_future) for h in self.horizons_ms]


def _key(h: float) -> str:
    return str(int(h)) if float(h).is_integer() else repr(float(h))


def per_sample_errors(model: Predictor, dataset: Dataset, horizons: HorizonSet) -> np.ndarray:
    """``(S, H)`` per-sample MPJPE at each horizon."""
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot evaluate on an empty dataset")
    idx = horizons.frames(dataset.frame_period_ms, dataset.t_future)
    frames = dataset.frames()
    n = dataset.n_history
    pred = np.asarray(model(frames[:, :n]), dtype=float)
    gt = frames[:, n : n + dataset.t_future]
    if pred.shape != gt.shape:
        raise DimensionError(f"predictor returned {pred.shape}, expected {gt.shape}")
    cols = [np.linalg.norm(pred[:, i - 1] - gt[:, i - 1], axis=-1).mean(axis=-1) for i in idx]
    return np.stack(cols, axis=1)


def _by_horizon(errors: np.ndarray, horizons: HorizonSet) -> dict:
    means = errors.sum(axis=0) / len(errors)
    return {_key(h): float(v) for h, v in zip(horizons.horizons_ms, means)}


def cde(model: Predictor, clean_test: Dataset, horizons: HorizonSet = HorizonSet()) -> dict:
    """Expected per-horizon error on clean inputs against the true futures."""
    return _by_horizon(per_sample_errors(model, clean_test, horizons), horizons)


def bde(model: Predictor, poisoned_test: Dataset, horizons: HorizonSet = HorizonSet()) -> dict:
    """Expected per-horizon error on triggered inputs against the attacker's targets."""
    return _by_horizon(per_sample_errors(model, poisoned_test, horizons), horizons)


def _split_actions(errors: np.ndarray, dataset: Dataset, horizons: HorizonSet) -> dict:
    actions = np.array([str(a) for a in dataset.actions])
    return {a: _by_horizon(errors[actions == a], horizons) for a in sorted(set(actions))}


def per_action(model: Predictor, dataset: Dataset, horizons: HorizonSet = HorizonSet()) -> dict:
    return _split_actions(per_sample_errors(model, dataset, horizons), dataset, horizons)


# --- smoothness / naturalness -----------------------------------------------------

def _frames_of(seq) -> np.ndarray:
    return seq.frames if isinstance(seq, MotionSequence) else np.asarray(seq, dtype=float)


def acc_metric(seq) -> float:
    """Mean squared second forward difference of joint positions (mm/frame^2)."""
    x = _frames_of(seq)
    if len(x) < 3:
        raise RangeError(f"acceleration needs at least 3 frames, got {len(x)}")
    d2 = x[2:] - 2 * x[1:-1] + x[:-2]
    return float((d2**2).sum(axis=-1).mean())


def jerk_metric(seq) -> float:
    """Mean squared third forward difference of joint positions (mm/frame^3)."""
    x = _frames_of(seq)
    if len(x) < 4:
        raise RangeError(f"jerk needs at least 4 frames, got {len(x)}")
    d3 = x[3:] - 3 * x[2:-1] + 3 * x[1:-2] - x[:-3]
    return float((d3**2).sum(axis=-1).mean())


def blc_metric(seq, topo: SkeletonTopology) -> float:
    """Mean absolute frame-to-frame bone length change (mm)."""
    x = _frames_of(seq)
    if len(x) < 2:
        raise RangeError(f"bone length change needs at least 2 frames, got {len(x)}")
    lengths = frame_bone_lengths(x, topo)
    return float(np.abs(np.diff(lengths, axis=0)).mean())


def _stats(dataset: Dataset, topo: SkeletonTopology) -> dict:
    acc = [acc_metric(s) for s in dataset]
    jerk = [jerk_metric(s) for s in dataset]
    blc = [blc_metric(s, topo) for s in dataset]
    return {"max_acc": float(max(acc)), "max_jerk": float(max(jerk)), "mean_blc": float(sum(blc) / len(blc))}


def stealth_report(clean_set: Dataset, poisoned_set: Dataset, topo: SkeletonTopology) -> dict:
    """Max Acc, max Jerk and mean BLC of paired clean and poisoned sets."""
    if sorted(clean_set.ids) != sorted(poisoned_set.ids):
        raise PairingError("clean and poisoned sets do not contain the same sample ids")
    if len(clean_set) == 0:
        raise EmptyDatasetError("stealth statistics need at least one sample")
    return {"clean": _stats(clean_set, topo), "poisoned": _stats(poisoned_set, topo)}


# --- reports --------------------------------------------------------------------

@dataclass
class EvalReport:
    cde_by_horizon: dict
    bde_by_horizon: dict
    per_action_cde: dict = field(default_factory=dict)
    per_action_bde: dict = field(default_factory=dict)
    stealth: Optional[dict] = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        values = list(self.cde_by_horizon.values()) + list(self.bde_by_horizon.values())
        for group in (self.per_action_cde, self.per_action_bde):
            for row in group.values():
                values.extend(row.values())
        if self.stealth:
            for row in self.stealth.values():
                values.extend(row.values())
        if any(not (math.isfinite(v) and v >= 0) for v in values):
            raise ValueError("report values must be finite and non-negative")

    def to_dict(self) -> dict:
        return {
            "cde_by_horizon": self.cde_by_horizon,
            "bde_by_horizon": self.bde_by_horizon,
            "per_action": {"cde": self.per_action_cde, "bde": self.per_action_bde},
            "stealth": self.stealth,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        pa = d.get("per_action", {})
        return cls(d["cde_by_horizon"], d["bde_by_horizon"], pa.get("cde", {}), pa.get("bde", {}),
                   d.get("stealth"), d.get("config", {}))

    def to_csv(self) -> str:
        """Rows CDE/BDE (plus per-action rows), one column per horizon in ms."""
        keys = list(self.cde_by_horizon)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["action", "metric"] + keys)
        w.writerow(["average", "CDE"] + [f"{self.cde_by_horizon[k]:.4f}" for k in keys])
        w.writerow(["average", "BDE"] + [f"{self.bde_by_horizon[k]:.4f}" for k in keys])
        for action in sorted(set(self.per_action_cde) | set(self.per_action_bde)):
            for name, group in (("CDE", self.per_action_cde), ("BDE", self.per_action_bde)):
                if action in group:
                    w.writerow([action, name] + [f"{group[action][k]:.4f}" for k in keys])
        if self.stealth:
            w.writerow([])
            w.writerow(["stealth", "set", "max_acc", "max_jerk", "mean_blc"])
            for name, row in self.stealth.items():
                w.writerow(["stealth", name, f"{row['max_acc']:.4f}", f"{row['max_jerk']:.4f}",
                            f"{row['mean_blc']:.4f}"])
        return buf.getvalue()


def evaluate(
    model: Predictor,
    clean_test: Dataset,
    poisoned_test: Dataset,
    horizons: HorizonSet = HorizonSet(),
    stealth: Optional[dict] = None,
    config: Optional[dict] = None,
) -> EvalReport:
    clean_err = per_sample_errors(model, clean_test, horizons)
    pois_err = per_sample_errors(model, poisoned_test, horizons)
    return EvalReport(
        _by_horizon(clean_err, horizons),
        _by_horizon(pois_err, horizons),
        _split_actions(clean_err, clean_test, horizons),
        _split_actions(pois_err, poisoned_test, horizons),
        stealth,
        dict(config or {}),
    )


def fidelity_gap(victim: EvalReport, benign: EvalReport) -> dict:
    """Per-horizon ``|CDE(victim) - CDE(benign)|``."""
    return {k: abs(victim.cde_by_horizon[k] - benign.cde_by_horizon[k]) for k in benign.cde_by_horizon}


def is_high_fidelity(victim: EvalReport, benign: EvalReport, epsilon: float = 3.0) -> bool:
    return all(gap <= epsilon for gap in fidelity_gap(victim, benign).values())

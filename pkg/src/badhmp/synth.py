"""Synthetic kinematic motion generator used as a desk-scale dataset.

A fixed 17-joint stick skeleton is driven by forward kinematics from
per-action joint-angle schedules (sinusoids with per-sample phase, amplitude
and speed jitter) plus a root trajectory. Optional stochastic joint-angle
perturbations (a rough random-walk tremor and a smooth damped drift) make the
future uncertain given the history without bending any bone. Bones are
exactly rigid before the optional Gaussian joint noise is added.

Axes: x forward, y to the subject's left, z up. Millimetres.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .motion import Limb, MotionSequence, SkeletonTopology

# name, parent, rest offset from parent (mm)
_JOINTS = (
    ("pelvis", -1, (0.0, 0.0, 0.0)),
    ("right_hip", 0, (0.0, -130.0, 0.0)),
    ("right_knee", 1, (0.0, 0.0, -440.0)),
    ("right_ankle", 2, (0.0, 0.0, -430.0)),
    ("left_hip", 0, (0.0, 130.0, 0.0)),
    ("left_knee", 4, (0.0, 0.0, -440.0)),
    ("left_ankle", 5, (0.0, 0.0, -430.0)),
    ("spine", 0, (0.0, 0.0, 230.0)),
    ("thorax", 7, (0.0, 0.0, 250.0)),
    ("neck", 8, (0.0, 0.0, 110.0)),
    ("head", 9, (0.0, 0.0, 120.0)),
    ("left_shoulder", 8, (0.0, 160.0, 0.0)),
    ("left_elbow", 11, (0.0, 0.0, -280.0)),
    ("left_wrist", 12, (0.0, 0.0, -250.0)),
    ("right_shoulder", 8, (0.0, -160.0, 0.0)),
    ("right_elbow", 14, (0.0, 0.0, -280.0)),
    ("right_wrist", 15, (0.0, 0.0, -250.0)),
)
J = {name: i for i, (name, _, _) in enumerate(_JOINTS)}
REST_OFFSETS = np.array([o for _, _, o in _JOINTS])
PELVIS_HEIGHT = 880.0

ACTIONS = ("walk", "wave", "kick", "idle")


def stick_skeleton() -> SkeletonTopology:
    """The 17-joint skeleton used by the synthetic generator."""
    limbs = {
        "torso": Limb(J["pelvis"], (J["spine"], J["thorax"], J["neck"], J["head"])),
        "left_arm": Limb(J["left_shoulder"], (J["left_elbow"], J["left_wrist"])),
        "right_arm": Limb(J["right_shoulder"], (J["right_elbow"], J["right_wrist"])),
        "left_leg": Limb(J["pelvis"], (J["left_hip"], J["left_knee"], J["left_ankle"])),
        "right_leg": Limb(J["pelvis"], (J["right_hip"], J["right_knee"], J["right_ankle"])),
    }
    return SkeletonTopology(
        tuple(n for n, _, _ in _JOINTS),
        tuple(p for _, p, _ in _JOINTS),
        limbs,
    )


@dataclass(frozen=True)
class SynthConfig:
    actions: tuple[str, ...] = ACTIONS
    samples_per_action: int = 728
    n_history: int = 50
    t_future: int = 25
    frame_period_ms: float = 40.0
    noise_std: float = 4.0
    rng_seed: int = 0
    amplitude_jitter: float = 0.3
    speed_jitter: float = 0.25
    walk_speed_mm_s: float = 1200.0
    # per-frame std of a random walk added to joint angles (deg) and root (mm)
    tremor_deg: float = 0.0
    tremor_root_mm: float = 0.0
    # smooth mean-reverting drift: stationary std (deg, mm) and time constant (s)
    drift_deg: float = 0.0
    drift_root_mm: float = 0.0
    drift_tau_s: float = 0.5

    def __post_init__(self):
        if self.samples_per_action <= 0:
            raise ValueError("samples_per_action must be positive")
        if self.n_history <= 0 or self.t_future <= 0:
            raise ValueError("n_history and t_future must be positive")
        if self.frame_period_ms <= 0:
            raise ValueError("frame_period_ms must be positive")
        scales = (self.noise_std, self.tremor_deg, self.tremor_root_mm, self.drift_deg, self.drift_root_mm)
        if min(scales) < 0:
            raise ValueError("noise, tremor and drift scales must be non-negative")
        if self.drift_tau_s <= 0:
            raise ValueError("drift_tau_s must be positive")
        unknown = set(self.actions) - set(ACTIONS)
        if unknown:
            raise ValueError(f"unknown actions {sorted(unknown)}; catalog is {ACTIONS}")


def _rot(axis: int, angle: np.ndarray) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    out = np.zeros(angle.shape + (3, 3))
    a, b = [(1, 2), (2, 0), (0, 1)][axis]
    out[..., axis, axis] = 1.0
    out[..., a, a] = c
    out[..., a, b] = -s
    out[..., b, a] = s
    out[..., b, b] = c
    return out


def _local_rotation(flex, abduct=None, twist=None) -> np.ndarray:
    """Rotation about y (sagittal flexion), then x (abduction), then z."""
    r = _rot(1, flex)
    if abduct is not None:
        r = _rot(0, abduct) @ r
    if twist is not None:
        r = _rot(2, twist) @ r
    return r


def forward_kinematics(root_pos: np.ndarray, local: dict, root_rot=None) -> np.ndarray:
    """Joint positions ``(F, K, 3)`` from root positions and local joint rotations.

    ``local`` maps joint index to an ``(F, 3, 3)`` rotation applied at that
    joint (it orients the bones to the joint's children).
    """
    topo = stick_skeleton()
    n = len(root_pos)
    eye = np.broadcast_to(np.eye(3), (n, 3, 3))
    glob = [None] * topo.joint_count
    pos = np.zeros((n, topo.joint_count, 3))
    root = topo.root
    glob[root] = (root_rot if root_rot is not None else eye) @ local.get(root, eye)
    pos[:, root] = root_pos
    for j in topo.order[1:]:
        p = topo.parents[j]
        pos[:, j] = pos[:, p] + glob[p] @ REST_OFFSETS[j]
        glob[j] = glob[p] @ local.get(j, eye)
    return pos


def _deg(x):
    return np.deg2rad(x)


def _walk(t, ph, amp, spd, cfg):
    w = 2 * np.pi * 1.0 * spd
    s = np.sin(w * t + ph)
    c = np.cos(w * t + ph)
    speed = cfg.walk_speed_mm_s * spd
    local = {
        J["left_hip"]: _local_rotation(_deg(-25 * amp) * s),
        J["right_hip"]: _local_rotation(_deg(25 * amp) * s),
        J["left_knee"]: _local_rotation(_deg(35 * amp) * (1 + c) / 2),
        J["right_knee"]: _local_rotation(_deg(35 * amp) * (1 - c) / 2),
        J["left_shoulder"]: _local_rotation(_deg(22 * amp) * s, _deg(8) + 0 * t),
        J["right_shoulder"]: _local_rotation(_deg(-22 * amp) * s, _deg(-8) + 0 * t),
        J["left_elbow"]: _local_rotation(_deg(-10 - 10 * amp * (1 - s))),
        J["right_elbow"]: _local_rotation(_deg(-10 - 10 * amp * (1 + s))),
        J["spine"]: _local_rotation(_deg(-4) + 0 * t, None, _deg(5 * amp) * s),
    }
    root = np.stack([speed * t, 0 * t, PELVIS_HEIGHT + 15 * amp * np.cos(2 * (w * t + ph))], axis=-1)
    return root, local


def _wave(t, ph, amp, spd, cfg):
    w = 2 * np.pi * 1.6 * spd
    s = np.sin(w * t + ph)
    slow = np.sin(2 * np.pi * 0.3 * spd * t + 2 * ph)
    local = {
        J["left_shoulder"]: _local_rotation(_deg(-20) + 0 * t, _deg(140 + 10 * amp * slow)),
        J["left_elbow"]: _local_rotation(0 * t, _deg(35 * amp) * s),
        J["right_shoulder"]: _local_rotation(_deg(4) * slow, _deg(-6) + 0 * t),
        J["right_elbow"]: _local_rotation(_deg(-15) + 0 * t),
        J["spine"]: _local_rotation(_deg(2) * slow, _deg(-4 * amp) + 0 * t),
    }
    root = np.stack([0 * t, 20 * amp * slow, PELVIS_HEIGHT + 0 * t], axis=-1)
    return root, local


def _kick(t, ph, amp, spd, cfg):
    w = 2 * np.pi * 0.7 * spd
    s = np.sin(w * t + ph)
    pulse = np.clip(s, 0, None) ** 2
    prep = np.clip(-s, 0, None) ** 2
    local = {
        J["right_hip"]: _local_rotation(_deg(-70 * amp) * pulse + _deg(15) * prep),
        J["right_knee"]: _local_rotation(_deg(60) * prep + _deg(10) * pulse),
        J["left_knee"]: _local_rotation(_deg(10) * pulse),
        J["left_shoulder"]: _local_rotation(_deg(-25 * amp) * pulse, _deg(15) + _deg(20) * pulse),
        J["right_shoulder"]: _local_rotation(_deg(30 * amp) * pulse, _deg(-15) - _deg(20) * pulse),
        J["left_elbow"]: _local_rotation(_deg(-30) * pulse - _deg(10)),
        J["right_elbow"]: _local_rotation(_deg(-30) * pulse - _deg(10)),
        J["spine"]: _local_rotation(_deg(12 * amp) * pulse),
    }
    root = np.stack([-40 * amp * pulse, 0 * t, PELVIS_HEIGHT - 20 * amp * pulse], axis=-1)
    return root, local


def _idle(t, ph, amp, spd, cfg):
    w = 2 * np.pi * 0.25 * spd
    s = np.sin(w * t + ph)
    breath = np.sin(2 * np.pi * 0.35 * spd * t + 3 * ph)
    local = {
        J["spine"]: _local_rotation(_deg(3 * amp) * breath, _deg(3 * amp) * s),
        J["left_shoulder"]: _local_rotation(_deg(8 * amp) * breath, _deg(6) + _deg(6 * amp) * s),
        J["right_shoulder"]: _local_rotation(_deg(-8 * amp) * breath, _deg(-6) + _deg(6 * amp) * s),
        J["left_elbow"]: _local_rotation(_deg(-20) + _deg(12 * amp) * s),
        J["right_elbow"]: _local_rotation(_deg(-20) - _deg(12 * amp) * s),
        J["left_hip"]: _local_rotation(0 * t, _deg(-4 * amp) * s),
        J["right_hip"]: _local_rotation(0 * t, _deg(-4 * amp) * s),
    }
    root = np.stack([0 * t, 40 * amp * s, PELVIS_HEIGHT + 0 * t], axis=-1)
    return root, local


_SCHEDULES = {"walk": _walk, "wave": _wave, "kick": _kick, "idle": _idle}


def walk_root_x(t: np.ndarray, speed_scale: float, cfg: SynthConfig) -> np.ndarray:
    """Closed-form root x position of the walk schedule (before offset and noise)."""
    return cfg.walk_speed_mm_s * speed_scale * t


# joints whose local rotation receives tremor: every joint with a child
_TREMOR_JOINTS = tuple(sorted({p for _, p, _ in _JOINTS if p >= 0}))


def _apply_tremor(root, local, tremor):
    """Compose random-walk angle offsets ``(F, J, 2)`` (rad) and root drift ``(F, 3)``."""
    angles, drift = tremor
    eye = np.broadcast_to(np.eye(3), (len(root), 3, 3))
    out = dict(local)
    for i, j in enumerate(_TREMOR_JOINTS):
        out[j] = local.get(j, eye) @ _local_rotation(angles[:, i, 0], angles[:, i, 1])
    return root + drift, out


def _damped_drift(rng, n_frames: int, shape: tuple, std: float, tau: float, dt: float) -> np.ndarray:
    """Critically damped second-order process with stationary std ``std``.

    ``x'' = -w^2 x - 2 w x' + q dW`` with ``w = 1/tau``, integrated with
    semi-implicit Euler after a burn-in of ``10 tau`` so every frame is drawn
    from the stationary regime.
    """
    w = 1.0 / tau
    q = std * np.sqrt(4.0 * w**3)
    burn = int(np.ceil(10.0 * tau / dt))
    eps = rng.normal(0.0, 1.0, size=(burn + n_frames,) + shape)
    x = np.zeros(shape)
    v = np.zeros(shape)
    out = np.empty((n_frames,) + shape)
    for i in range(burn + n_frames):
        v = v + dt * (-w * w * x - 2.0 * w * v) + q * np.sqrt(dt) * eps[i]
        x = x + dt * v
        if i >= burn:
            out[i - burn] = x
    return out


def draw_tremor(rng, cfg: SynthConfig, n_frames: int):
    """Joint-angle offsets ``(F, J, 2)`` in rad and root offsets ``(F, 3)`` in mm.

    The sum of a zero-start random walk (tremor, rough) and a stationary
    damped drift (smooth, dominates long horizons).
    """
    steps = rng.normal(0.0, 1.0, size=(n_frames, len(_TREMOR_JOINTS), 2)) * np.deg2rad(cfg.tremor_deg)
    root_steps = rng.normal(0.0, cfg.tremor_root_mm, size=(n_frames, 3))
    steps[0] = 0.0
    root_steps[0] = 0.0
    angles = np.cumsum(steps, axis=0)
    root = np.cumsum(root_steps, axis=0)
    if cfg.drift_deg > 0 or cfg.drift_root_mm > 0:
        dt = cfg.frame_period_ms / 1000.0
        angles = angles + _damped_drift(rng, n_frames, (len(_TREMOR_JOINTS), 2),
                                        np.deg2rad(cfg.drift_deg), cfg.drift_tau_s, dt)
        drift = _damped_drift(rng, n_frames, (3,), cfg.drift_root_mm, cfg.drift_tau_s, dt)
        drift[:, 2] *= 0.25  # little vertical drift
        root = root + drift
    return angles, root


def generate_sequence(action: str, params: dict, cfg: SynthConfig, sample_id: str, noise=None,
                      tremor=None) -> MotionSequence:
    """One sample from explicit jitter ``params``.

    ``params`` has ``phase`` (rad), ``amplitude`` and ``speed`` scales and the
    ``origin`` (3,) root offset in mm. ``tremor`` (from :func:`draw_tremor`)
    perturbs the kinematics and keeps bones rigid; ``noise`` is added to the
    joint positions afterwards.
    """
    n_frames = cfg.n_history + cfg.t_future
    t = np.arange(n_frames) * (cfg.frame_period_ms / 1000.0)
    root, local = _SCHEDULES[action](t, params["phase"], params["amplitude"], params["speed"], cfg)
    if tremor is not None:
        root, local = _apply_tremor(root, local, tremor)
    frames = forward_kinematics(root + np.asarray(params["origin"]), local)
    if noise is not None:
        frames = frames + noise
    return MotionSequence(frames, cfg.frame_period_ms, cfg.n_history, cfg.t_future, sample_id, action)


def synth_generate(cfg: SynthConfig) -> Dataset:
    """Generate ``samples_per_action`` samples for every action in the catalog."""
    rng = np.random.default_rng(cfg.rng_seed)
    topo = stick_skeleton()
    n_frames = cfg.n_history + cfg.t_future
    samples = []
    for action in cfg.actions:
        for i in range(cfg.samples_per_action):
            params = {
                "phase": rng.uniform(0.0, 2 * np.pi),
                "amplitude": 1.0 + rng.uniform(-cfg.amplitude_jitter, cfg.amplitude_jitter),
                "speed": 1.0 + rng.uniform(-cfg.speed_jitter, cfg.speed_jitter),
                "origin": np.array([rng.uniform(-1000, 1000), rng.uniform(-1000, 1000), 0.0]),
            }
            noise = rng.normal(0.0, cfg.noise_std, size=(n_frames, topo.joint_count, 3)) if cfg.noise_std > 0 else None
            tremor = None
            if max(cfg.tremor_deg, cfg.tremor_root_mm, cfg.drift_deg, cfg.drift_root_mm) > 0:
                tremor = draw_tremor(rng, cfg, n_frames)
            samples.append(generate_sequence(action, params, cfg, f"{action}_{i:04d}", noise, tremor))
    return Dataset(tuple(samples), topo, split_tag="all")

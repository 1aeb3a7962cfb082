"""A compact DCT + graph-convolution motion predictor trained with Adam.

Pipeline for one history of N frames:

1. centre on the last observed root position and rescale (``coord_scale``);
2. pad to N+T frames by repeating the last pose;
3. take the leading C DCT coefficients of every coordinate trajectory, giving
   a ``(G, C)`` feature matrix over ``G = 3K`` graph nodes;
4. apply L graph convolutions ``A @ H @ W + b`` (tanh on all but the last);
5. add the output, read as a correction to the leading C coefficients of the
   padded input, and invert the DCT; the last T frames are the prediction.

With every parameter zero the prediction is the frozen last pose. Gradients
are derived by hand; ``loss_and_grad`` is checked against finite differences
in the test suite.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .data import Dataset, _atomic_write
from .dct import DctBasis
from .errors import DimensionError, DivergenceError, EmptyDatasetError, ParseError

CHECKPOINT_FORMAT = "badhmp-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PredictorConfig:
    n_history: int = 50
    t_future: int = 25
    joint_count: int = 17
    root_joint: int = 0
    dct_coeffs: int = 20
    hidden: int = 64
    layers: int = 2
    coord_scale: float = 1e-3  # model works in metres
    adjacency_noise: float = 1e-3

    def __post_init__(self):
        if min(self.n_history, self.t_future, self.joint_count, self.hidden, self.layers) < 1:
            raise ValueError("predictor sizes must be positive")
        if not 1 <= self.dct_coeffs <= self.n_history + self.t_future:
            raise ValueError(f"dct_coeffs must lie in [1, N+T], got {self.dct_coeffs}")
        if self.coord_scale <= 0:
            raise ValueError("coord_scale must be positive")

    @property
    def nodes(self) -> int:
        return 3 * self.joint_count

    @property
    def widths(self) -> list[int]:
        return [self.dct_coeffs] + [self.hidden] * (self.layers - 1) + [self.dct_coeffs]

    def basis(self) -> DctBasis:
        return DctBasis(self.n_history + self.t_future, self.dct_coeffs)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 256
    learning_rate: float = 0.01
    lr_decay: float = 0.96
    decay_every: int = 2
    rng_seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.decay_every < 1:
            raise ValueError("epochs must be >= 0, batch_size and decay_every >= 1")
        if self.learning_rate <= 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("learning_rate must be positive and lr_decay in (0, 1]")

    def lr_at(self, epoch: int) -> float:
        """Step-decayed learning rate of (0-based) ``epoch``."""
        return self.learning_rate * self.lr_decay ** (epoch // self.decay_every)


@dataclass
class ModelParams:
    config: PredictorConfig
    tensors: dict  # name -> ndarray, in declaration order (A0, W0, b0, A1, ...)

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def equals(self, other: "ModelParams") -> bool:
        return self.config == other.config and list(self.tensors) == list(other.tensors) and all(
            self.tensors[k].shape == other.tensors[k].shape
            and self.tensors[k].tobytes() == other.tensors[k].tobytes()
            for k in self.tensors
        )


@dataclass
class TrainHistory:
    initial_loss: float
    epoch_losses: list = field(default_factory=list)
    learning_rates: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def param_names(config: PredictorConfig) -> list[str]:
    return [f"{kind}{l}" for l in range(config.layers) for kind in ("A", "W", "b")]


def init_params(config: PredictorConfig, seed: int = 0, adjacency_noise: Optional[float] = None) -> ModelParams:
    """Uniform(+-1/sqrt(fan_in)) weights, identity-plus-noise adjacency, zero bias."""
    rng = np.random.default_rng(seed)
    noise = config.adjacency_noise if adjacency_noise is None else adjacency_noise
    g = config.nodes
    widths = config.widths
    tensors = {}
    for l in range(config.layers):
        fan_in, fan_out = widths[l], widths[l + 1]
        a = np.eye(g)
        if noise > 0:
            a = a + rng.normal(0.0, noise, size=(g, g))
        bound = 1.0 / math.sqrt(fan_in)
        tensors[f"A{l}"] = a
        tensors[f"W{l}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        tensors[f"b{l}"] = np.zeros(fan_out)
    return ModelParams(config, tensors)


def zero_params(config: PredictorConfig) -> ModelParams:
    p = init_params(config, 0, adjacency_noise=0.0)
    return ModelParams(config, {k: np.zeros_like(v) for k, v in p.tensors.items()})


# --- input preparation -------------------------------------------------------------

@dataclass
class Prepared:
    """Model-space quantities for a batch of histories (and optional futures)."""

    features: np.ndarray  # (B, G, C) DCT coefficients of the padded history
    padded_future: np.ndarray  # (B, G, T) padded history on the future frames
    root: np.ndarray  # (B, 3) centring offset in mm
    target: Optional[np.ndarray] = None  # (B, G, T) centred, scaled futures

    def __len__(self):
        return len(self.features)

    def take(self, idx) -> "Prepared":
        return Prepared(
            self.features[idx],
            self.padded_future[idx],
            self.root[idx],
            None if self.target is None else self.target[idx],
        )


def pad_history(history: np.ndarray, t_future: int) -> np.ndarray:
    """Append ``t_future`` copies of the last frame (time is axis -3)."""
    history = np.asarray(history, dtype=float)
    if history.ndim < 3 or history.shape[-3] < 1:
        raise DimensionError(f"history must be (..., N, K, 3) with N >= 1, got {history.shape}")
    last = history[..., -1:, :, :]
    reps = np.repeat(last, t_future, axis=-3)
    return np.concatenate([history, reps], axis=-3)


def _to_nodes(frames: np.ndarray) -> np.ndarray:
    b, m, k, _ = frames.shape
    return frames.reshape(b, m, 3 * k).transpose(0, 2, 1)


def _from_nodes(nodes: np.ndarray) -> np.ndarray:
    b, g, m = nodes.shape
    return nodes.transpose(0, 2, 1).reshape(b, m, g // 3, 3)


def prepare(config: PredictorConfig, histories, futures=None, basis: Optional[DctBasis] = None) -> Prepared:
    histories = np.asarray(histories, dtype=float)
    if histories.ndim == 3:
        histories = histories[None]
    n, t, k = config.n_history, config.t_future, config.joint_count
    if histories.shape[1:] != (n, k, 3):
        raise DimensionError(f"histories have shape {histories.shape[1:]}, model expects ({n}, {k}, 3)")
    basis = basis or config.basis()
    s = config.coord_scale
    root = histories[:, -1, config.root_joint, :]
    centred = (histories - root[:, None, None, :]) * s
    nodes = _to_nodes(pad_history(centred, t))
    features = nodes @ basis.matrix.T
    target = None
    if futures is not None:
        futures = np.asarray(futures, dtype=float)
        if futures.ndim == 3:
            futures = futures[None]
        if futures.shape != (len(histories), t, k, 3):
            raise DimensionError(f"futures have shape {futures.shape}, expected {(len(histories), t, k, 3)}")
        target = _to_nodes((futures - root[:, None, None, :]) * s)
    return Prepared(features, np.ascontiguousarray(nodes[:, :, n:]), root, target)


# --- forward / backward ------------------------------------------------------------

def _layers_forward(params: ModelParams, x: np.ndarray):
    cache = []
    h = x
    last = params.config.layers - 1
    for l in range(params.config.layers):
        a, w, b = params.tensors[f"A{l}"], params.tensors[f"W{l}"], params.tensors[f"b{l}"]
        u = np.matmul(a, h)
        z = u @ w + b
        cache.append((h, u))
        h = z if l == last else np.tanh(z)
    return h, cache


def _predict_nodes(params: ModelParams, prep: Prepared, basis: DctBasis):
    n = params.config.n_history
    correction, cache = _layers_forward(params, prep.features)
    future_basis = basis.matrix[:, n:]
    return prep.padded_future + correction @ future_basis, cache


def forward(params: ModelParams, history: np.ndarray) -> np.ndarray:
    """Predict ``(T, K, 3)`` (or ``(B, T, K, 3)`` for a batch) future frames in mm."""
    history = np.asarray(history, dtype=float)
    single = history.ndim == 3
    cfg = params.config
    basis = cfg.basis()
    prep = prepare(cfg, history, basis=basis)
    nodes, _ = _predict_nodes(params, prep, basis)
    pred = _from_nodes(nodes) / cfg.coord_scale + prep.root[:, None, None, :]
    return pred[0] if single else pred


def _loss_grad(params: ModelParams, prep: Prepared, basis: DctBasis, need_grad: bool = True):
    cfg = params.config
    b = len(prep)
    if b == 0:
        raise EmptyDatasetError("loss needs a non-empty batch")
    n = cfg.n_history
    s = cfg.coord_scale
    nodes, cache = _predict_nodes(params, prep, basis)
    err = (nodes - prep.target) / s  # mm
    denom = b * cfg.t_future * cfg.joint_count
    loss = float((err * err).sum() / denom)
    if not need_grad:
        return loss, None
    d_nodes = err * (2.0 / (denom * s))
    d_h = d_nodes @ basis.matrix[:, n:].T
    grads = {}
    last = cfg.layers - 1
    for l in range(last, -1, -1):
        a, w = params.tensors[f"A{l}"], params.tensors[f"W{l}"]
        h_in, u = cache[l]
        d_z = d_h if l == last else d_h * (1.0 - cache[l + 1][0] ** 2)
        grads[f"W{l}"] = np.tensordot(u, d_z, axes=([0, 1], [0, 1]))
        grads[f"b{l}"] = d_z.sum(axis=(0, 1))
        d_u = d_z @ w.T
        grads[f"A{l}"] = np.tensordot(d_u, h_in, axes=([0, 2], [0, 2]))
        d_h = np.matmul(a.T, d_u)
    return loss, {k: grads[k] for k in params.tensors}


def _as_prepared(params: ModelParams, batch, basis: DctBasis) -> Prepared:
    if isinstance(batch, Prepared):
        return batch
    if isinstance(batch, Dataset):
        if len(batch) == 0:
            raise EmptyDatasetError("loss needs a non-empty batch")
        frames = batch.frames()
        n = params.config.n_history
        return prepare(params.config, frames[:, :n], frames[:, n : n + params.config.t_future], basis)
    histories, futures = batch
    if len(histories) == 0:
        raise EmptyDatasetError("loss needs a non-empty batch")
    return prepare(params.config, histories, futures, basis)


def loss_and_grad(params: ModelParams, batch) -> tuple[float, dict]:
    """Mean squared joint error over the future frames and its exact gradient.

    ``batch`` is a Dataset, a ``(histories, futures)`` pair of arrays, or a
    :class:`Prepared` batch.
    """
    basis = params.config.basis()
    return _loss_grad(params, _as_prepared(params, batch, basis), basis)


def loss(params: ModelParams, batch) -> float:
    basis = params.config.basis()
    return _loss_grad(params, _as_prepared(params, batch, basis), basis, need_grad=False)[0]


# --- optimisation ------------------------------------------------------------------

class Adam:
    def __init__(self, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def step(self, params: dict, grads: dict):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[k] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def _run(params: ModelParams, dataset: Dataset, config: TrainConfig) -> tuple[ModelParams, TrainHistory]:
    cfg = params.config
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    if (dataset.n_history, dataset.t_future, dataset.topology.joint_count) != (cfg.n_history, cfg.t_future, cfg.joint_count):
        raise DimensionError("dataset N/T/K do not match the predictor configuration")
    basis = cfg.basis()
    frames = dataset.frames()
    prep = prepare(cfg, frames[:, : cfg.n_history], frames[:, cfg.n_history :], basis)
    history = TrainHistory(initial_loss=_loss_grad(params, prep, basis, need_grad=False)[0])
    if not math.isfinite(history.initial_loss):
        raise DivergenceError(0, "initial loss is non-finite")
    rng = np.random.default_rng(config.rng_seed)
    adam = Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    size = len(prep)
    # overflow shows up as a non-finite loss and is reported as DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        return _epochs(params, prep, basis, config, rng, adam, history, size)


def _epochs(params, prep, basis, config, rng, adam, history, size):
    for epoch in range(config.epochs):
        adam.lr = config.lr_at(epoch)
        order = rng.permutation(size)
        total = 0.0
        for start in range(0, size, config.batch_size):
            idx = order[start : start + config.batch_size]
            value, grads = _loss_grad(params, prep.take(idx), basis)
            if not math.isfinite(value):
                raise DivergenceError(epoch)
            adam.step(params.tensors, grads)
            total += value * len(idx)
        epoch_loss = total / size
        if not math.isfinite(epoch_loss) or not all(np.isfinite(v).all() for v in params.tensors.values()):
            raise DivergenceError(epoch)
        history.epoch_losses.append(epoch_loss)
        history.learning_rates.append(adam.lr)
    return params, history


def train(
    dataset: Dataset,
    config: TrainConfig = TrainConfig(),
    predictor_config: Optional[PredictorConfig] = None,
    init_seed: int = 0,
) -> tuple[ModelParams, TrainHistory]:
    """Train from a seeded initialisation; deterministic given both seeds."""
    if predictor_config is None:
        predictor_config = PredictorConfig(dataset.n_history, dataset.t_future, dataset.topology.joint_count,
                                           root_joint=dataset.topology.root)
    return _run(init_params(predictor_config, init_seed), dataset, config)


def fine_tune(
    params: ModelParams,
    clean_subset: Dataset,
    epochs: int = 30,
    config: TrainConfig = TrainConfig(),
) -> ModelParams:
    """Continue training ``params`` (copied) on clean data only."""
    if epochs == 0:
        return params.copy()
    tuned, _ = _run(params.copy(), clean_subset, replace(config, epochs=epochs))
    return tuned


class MotionPredictor:
    """Callable wrapper: ``model(histories) -> futures`` in millimetres."""

    def __init__(self, params: ModelParams):
        self.params = params
        self.basis = params.config.basis()

    def __call__(self, histories) -> np.ndarray:
        histories = np.asarray(histories, dtype=float)
        single = histories.ndim == 3
        prep = prepare(self.params.config, histories, basis=self.basis)
        nodes, _ = _predict_nodes(self.params, prep, self.basis)
        pred = _from_nodes(nodes) / self.params.config.coord_scale + prep.root[:, None, None, :]
        return pred[0] if single else pred


# --- checkpoints -------------------------------------------------------------------

def checkpoint_dict(params: ModelParams, history: Optional[TrainHistory] = None, extra: Optional[dict] = None) -> dict:
    cfg = params.config
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "predictor_config": asdict(cfg),
        "dct": {"length": cfg.n_history + cfg.t_future, "coefficients": cfg.dct_coeffs},
        "params": [
            {"name": k, "shape": list(v.shape), "data": v.reshape(-1).tolist()} for k, v in params.tensors.items()
        ],
        "history": history.to_dict() if history is not None else None,
        "extra": extra or {},
    }


def save_checkpoint(path, params: ModelParams, history: Optional[TrainHistory] = None,
                    extra: Optional[dict] = None) -> Path:
    payload = json.dumps(checkpoint_dict(params, history, extra), indent=1) + "\n"
    _atomic_write(Path(path), payload.encode("utf-8"))
    return Path(path)


def load_checkpoint(path) -> tuple[ModelParams, Optional[TrainHistory], dict]:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: checkpoint is not valid JSON: {exc}") from None
    if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"{path}: not a version {CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} file")
    cfg = PredictorConfig(**d["predictor_config"])
    tensors = {}
    for entry in d["params"]:
        tensors[entry["name"]] = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
    if list(tensors) != param_names(cfg):
        raise ParseError(f"{path}: parameter names {list(tensors)} do not match the configuration")
    expected = init_params(cfg, 0, adjacency_noise=0.0)
    for k, v in expected.tensors.items():
        if tensors[k].shape != v.shape:
            raise DimensionError(f"{path}: tensor {k} has shape {tensors[k].shape}, expected {v.shape}")
    hist = d.get("history")
    history = TrainHistory(**hist) if hist else None
    return ModelParams(cfg, tensors), history, d.get("extra", {})

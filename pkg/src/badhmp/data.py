"""Dataset container, deterministic splits, and on-disk formats.

Two formats carry the same schema:

* JSON lines: one header object (``schema_version``, ``topology``,
  ``frame_period_ms``, ``n_history``, ``t_future``, ``split``) followed by one
  object per sample with ``id``, ``action`` and ``frames`` (nested
  ``[frame][joint][xyz]`` millimetre coordinates).
* Binary: magic ``BHMP0001``, a length-prefixed JSON header, then per sample a
  length-prefixed JSON record (``id``, ``action``, ``n_frames``) and the frames
  as length-prefixed little-endian doubles.

Clean and poisoned datasets are written identically; which samples were
poisoned lives only in the poison manifest.
"""
from __future__ import annotations

import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DimensionError, ParseError, RangeError
from .motion import MotionSequence, SkeletonTopology

SCHEMA_VERSION = 1
BINARY_MAGIC = b"BHMP0001"


@dataclass(frozen=True, eq=False)
class Dataset:
    samples: tuple[MotionSequence, ...]
    topology: SkeletonTopology
    split_tag: str = "train"
    provenance: str = "clean"
    n_history: Optional[int] = None
    t_future: Optional[int] = None
    frame_period_ms: Optional[float] = None
    _index: dict = field(default=None, repr=False)

    def __post_init__(self):
        samples = tuple(self.samples)
        object.__setattr__(self, "samples", samples)
        if samples:
            first = samples[0]
            for attr in ("n_history", "t_future", "frame_period_ms"):
                declared = getattr(self, attr)
                if declared is None:
                    object.__setattr__(self, attr, getattr(first, attr))
                elif declared != getattr(first, attr):
                    raise DimensionError(f"dataset {attr}={declared} but first sample has {getattr(first, attr)}")
        index = {}
        for s in samples:
            if s.joint_count != self.topology.joint_count:
                raise DimensionError(
                    f"sample {s.sample_id} has {s.joint_count} joints, topology has {self.topology.joint_count}"
                )
            if (s.n_history, s.t_future, s.frame_period_ms) != (self.n_history, self.t_future, self.frame_period_ms):
                raise DimensionError(f"sample {s.sample_id} has a different N/T/frame period from the dataset")
            if s.sample_id in index:
                raise DimensionError(f"duplicate sample id {s.sample_id!r}")
            index[s.sample_id] = len(index)
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, key):
        if isinstance(key, str):
            return self.samples[self._index[key]]
        return self.samples[key]

    def __contains__(self, sample_id):
        return sample_id in self._index

    @property
    def ids(self) -> list[str]:
        return [s.sample_id for s in self.samples]

    @property
    def actions(self) -> list[Optional[str]]:
        return [s.action for s in self.samples]

    def frames(self) -> np.ndarray:
        """All samples stacked into one ``(S, F, K, 3)`` array."""
        if not self.samples:
            return np.zeros((0, 0, self.topology.joint_count, 3))
        return np.stack([s.frames for s in self.samples])

    def with_samples(self, samples: Iterable[MotionSequence], **changes) -> "Dataset":
        kw = dict(
            topology=self.topology,
            split_tag=self.split_tag,
            provenance=self.provenance,
            n_history=self.n_history,
            t_future=self.t_future,
            frame_period_ms=self.frame_period_ms,
        )
        kw.update(changes)
        return Dataset(tuple(samples), **kw)

    def subset(self, ids: Iterable[str], **changes) -> "Dataset":
        wanted = set(ids)
        return self.with_samples([s for s in self.samples if s.sample_id in wanted], **changes)

    def equals(self, other: "Dataset") -> bool:
        return (
            len(self) == len(other)
            and self.topology == other.topology
            and all(a.equals(b) for a, b in zip(self.samples, other.samples))
        )


def _by_action(dataset: Dataset) -> dict:
    groups: dict = {}
    for i, s in enumerate(dataset.samples):
        groups.setdefault(s.action, []).append(i)
    return groups


def split(
    dataset: Dataset,
    test_fraction: Optional[float] = None,
    seed: int = 0,
    *,
    test_per_action: Optional[int] = None,
) -> tuple[Dataset, Dataset]:
    """Label-stratified train/test split.

    Either ``test_fraction`` (rounded per action) or an absolute
    ``test_per_action`` count selects the test samples; both sets keep the
    original sample order.
    """
    if (test_fraction is None) == (test_per_action is None):
        raise RangeError("give exactly one of test_fraction or test_per_action")
    if test_fraction is not None and not 0.0 <= test_fraction <= 1.0:
        raise RangeError(f"test_fraction must lie in [0, 1], got {test_fraction}")
    rng = np.random.default_rng(seed)
    test_idx = set()
    for action, idx in _by_action(dataset).items():
        if test_per_action is not None:
            if not 0 <= test_per_action <= len(idx):
                raise RangeError(f"cannot take {test_per_action} test samples from {len(idx)} of action {action!r}")
            n = test_per_action
        else:
            n = int(round(test_fraction * len(idx)))
        test_idx.update(idx[i] for i in rng.permutation(len(idx))[:n])
    train = [s for i, s in enumerate(dataset.samples) if i not in test_idx]
    test = [s for i, s in enumerate(dataset.samples) if i in test_idx]
    return dataset.with_samples(train, split_tag="train"), dataset.with_samples(test, split_tag="test")


def sample_test_subset(test: Dataset, per_action_count: int, seed: int = 0) -> Dataset:
    """Draw ``per_action_count`` samples of every action (all of them if fewer)."""
    if per_action_count < 0:
        raise RangeError(f"per_action_count must be non-negative, got {per_action_count}")
    rng = np.random.default_rng(seed)
    keep = set()
    for idx in _by_action(test).values():
        chosen = rng.permutation(len(idx))[:per_action_count]
        keep.update(idx[i] for i in chosen)
    return test.with_samples([s for i, s in enumerate(test.samples) if i in keep])


# --- persistence ----------------------------------------------------------------

def _header(dataset: Dataset) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "topology": dataset.topology.to_dict(),
        "frame_period_ms": dataset.frame_period_ms,
        "n_history": dataset.n_history,
        "t_future": dataset.t_future,
        "split": dataset.split_tag,
        "n_samples": len(dataset),
    }


def _check_header(header: dict, where: str):
    missing = {"schema_version", "topology", "frame_period_ms", "n_history", "t_future"} - set(header)
    if missing:
        raise ParseError(f"{where}: header is missing {sorted(missing)}")
    if header["schema_version"] != SCHEMA_VERSION:
        raise ParseError(f"{where}: unsupported schema_version {header['schema_version']!r}")
    try:
        return SkeletonTopology.from_dict(header["topology"])
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{where}: malformed topology ({exc})") from None


def _record_to_sequence(rec: dict, frames, header: dict, topo: SkeletonTopology, where: str) -> MotionSequence:
    try:
        arr = np.asarray(frames, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: frames are not a numeric array ({exc})") from None
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise ParseError(f"{where}: frames have shape {arr.shape}, expected (F, K, 3)")
    if arr.shape[1] != topo.joint_count:
        raise DimensionError(f"{where}: {arr.shape[1]} joints per frame, topology has {topo.joint_count}")
    return MotionSequence(
        frames=arr,
        frame_period_ms=header["frame_period_ms"],
        n_history=header["n_history"],
        t_future=header["t_future"],
        sample_id=str(rec["id"]),
        action=rec.get("action"),
    )


def _atomic_write(path: Path, payload: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonl_bytes(dataset: Dataset) -> bytes:
    buf = io.StringIO()
    buf.write(json.dumps(_header(dataset), allow_nan=False))
    buf.write("\n")
    for s in dataset.samples:
        rec = {"id": s.sample_id, "action": s.action, "frames": s.frames.tolist()}
        buf.write(json.dumps(rec, allow_nan=False))
        buf.write("\n")
    return buf.getvalue().encode("utf-8")


def _binary_bytes(dataset: Dataset) -> bytes:
    out = io.BytesIO()
    out.write(BINARY_MAGIC)
    head = json.dumps(_header(dataset)).encode("utf-8")
    out.write(struct.pack("<Q", len(head)))
    out.write(head)
    out.write(struct.pack("<Q", len(dataset)))
    for s in dataset.samples:
        meta = json.dumps({"id": s.sample_id, "action": s.action, "n_frames": len(s.frames)}).encode("utf-8")
        out.write(struct.pack("<I", len(meta)))
        out.write(meta)
        values = np.ascontiguousarray(s.frames, dtype="<f8")
        out.write(struct.pack("<Q", values.size))
        out.write(values.tobytes())
    return out.getvalue()


def is_binary_path(path) -> bool:
    return Path(path).suffix.lower() in (".bhmp", ".bin")


def save_dataset(dataset: Dataset, path, fmt: Optional[str] = None) -> Path:
    """Write ``dataset``; the format follows ``fmt`` or the file suffix."""
    path = Path(path)
    fmt = fmt or ("binary" if is_binary_path(path) else "jsonl")
    if fmt == "jsonl":
        payload = _jsonl_bytes(dataset)
    elif fmt == "binary":
        payload = _binary_bytes(dataset)
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    _atomic_write(path, payload)
    return path


def _load_jsonl(data: bytes, name: str, split_tag: Optional[str]) -> Dataset:
    header = None
    topo = None
    samples = []
    offset = 0
    for lineno, line in enumerate(data.splitlines(keepends=True), start=1):
        where = f"{name}: line {lineno} (byte offset {offset})"
        start = offset
        offset += len(line)
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ParseError(f"{name}: line {lineno} (byte offset {start}) is not valid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise ParseError(f"{where}: expected a JSON object")
        if header is None:
            header = obj
            topo = _check_header(header, where)
            continue
        if "id" not in obj or "frames" not in obj:
            raise ParseError(f"{where}: record needs 'id' and 'frames'")
        samples.append(_record_to_sequence(obj, obj["frames"], header, topo, where))
    if header is None:
        raise ParseError(f"{name}: empty file, no header record")
    expected = header.get("n_samples")
    if expected is not None and expected != len(samples):
        raise ParseError(
            f"{name}: truncated at byte offset {len(data)}: header declares {expected} records, found {len(samples)}"
        )
    return Dataset(
        tuple(samples),
        topo,
        split_tag=split_tag or header.get("split", "train"),
        n_history=header["n_history"],
        t_future=header["t_future"],
        frame_period_ms=header["frame_period_ms"],
    )


class _Reader:
    def __init__(self, data: bytes, name: str):
        self.data, self.name, self.pos = data, name, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError(
                f"{self.name}: truncated at byte offset {len(self.data)} while reading {what} "
                f"(needed {n} bytes from offset {self.pos})"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def json(self, n: int, what: str) -> dict:
        start = self.pos
        raw = self.take(n, what)
        try:
            return json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ParseError(f"{self.name}: bad {what} at byte offset {start}: {exc}") from None


def _load_binary(data: bytes, name: str, split_tag: Optional[str]) -> Dataset:
    r = _Reader(data, name)
    if r.take(len(BINARY_MAGIC), "magic") != BINARY_MAGIC:
        raise ParseError(f"{name}: bad magic bytes at byte offset 0")
    (hlen,) = struct.unpack("<Q", r.take(8, "header length"))
    header = r.json(hlen, "header")
    topo = _check_header(header, f"{name}: header")
    (count,) = struct.unpack("<Q", r.take(8, "record count"))
    samples = []
    for i in range(count):
        where = f"{name}: record {i} (byte offset {r.pos})"
        (mlen,) = struct.unpack("<I", r.take(4, f"record {i} meta length"))
        meta = r.json(mlen, f"record {i} meta")
        (n,) = struct.unpack("<Q", r.take(8, f"record {i} value count"))
        raw = r.take(8 * n, f"record {i} frames")
        values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        k = topo.joint_count
        n_frames = int(meta.get("n_frames", 0))
        if n != n_frames * k * 3:
            if n_frames and n % (n_frames * 3) == 0:
                raise DimensionError(f"{where}: {n // (n_frames * 3)} joints per frame, topology has {k}")
            raise ParseError(f"{where}: {n} values do not match {n_frames} frames x {k} joints x 3")
        samples.append(_record_to_sequence(meta, values.reshape(n_frames, k, 3), header, topo, where))
    if r.pos != len(data):
        raise ParseError(f"{name}: {len(data) - r.pos} trailing bytes at byte offset {r.pos}")
    return Dataset(
        tuple(samples),
        topo,
        split_tag=split_tag or header.get("split", "train"),
        n_history=header["n_history"],
        t_future=header["t_future"],
        frame_period_ms=header["frame_period_ms"],
    )


def load_dataset(path, split_tag: Optional[str] = None) -> Dataset:
    path = Path(path)
    data = path.read_bytes()
    if data.startswith(BINARY_MAGIC):
        return _load_binary(data, str(path), split_tag)
    return _load_jsonl(data, str(path), split_tag)

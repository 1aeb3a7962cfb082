"""SVG strips of skeleton frames.

Frames are picked evenly over the sequence, projected orthographically onto
the x-z plane (side view) and laid out left to right on a shared scale. An
optional overlay sequence is drawn on top with dashed bones.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

from .data import _atomic_write
from .errors import RangeError
from .motion import MotionSequence, SkeletonTopology

DEFAULT_FRAMES = 15
_CELL = 120.0
_MARGIN = 10.0


def frame_indices(n_frames: int, count: int = DEFAULT_FRAMES) -> list[int]:
    """``count`` evenly spaced frame indices including the first and last frame."""
    if count < 1:
        raise RangeError(f"need at least one frame to render, got {count}")
    if n_frames < 1:
        raise RangeError("cannot render an empty sequence")
    return [int(round(i)) for i in np.linspace(0, n_frames - 1, count)]


def _project(frames: np.ndarray) -> np.ndarray:
    """Side view: screen x from world x, screen y from world z (up)."""
    return frames[..., [0, 2]] * np.array([1.0, -1.0])


def render_svg(
    seq: MotionSequence,
    topo: SkeletonTopology,
    overlay: Optional[MotionSequence] = None,
    frames: int = DEFAULT_FRAMES,
) -> str:
    idx = frame_indices(len(seq.frames), frames)
    layers = [(seq, "solid")] + ([(overlay, "dashed")] if overlay is not None else [])
    for other, _ in layers[1:]:
        if len(other.frames) != len(seq.frames) or other.joint_count != seq.joint_count:
            raise RangeError(f"overlay {other.sample_id} does not match the layout of {seq.sample_id}")

    # one scale for every cell so poses stay comparable
    pts = {name: _project(s.frames[idx]) for s, name in layers}
    # both layers are centred on the main sequence's root
    anchor = pts["solid"][:, topo.root : topo.root + 1]
    local = {name: p - anchor for name, p in pts.items()}
    span = max(float(np.abs(p).max()) for p in local.values()) or 1.0
    scale = (_CELL / 2 - _MARGIN) / span

    width = _CELL * len(idx)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{_CELL:.0f}" '
        f'viewBox="0 0 {width:.0f} {_CELL:.0f}">',
        f"<title>{escape(seq.sample_id)}</title>",
    ]
    for name, p in local.items():
        dash = ' stroke-dasharray="4 3"' if name == "dashed" else ""
        colour = "#1f4e9c" if name == "solid" else "#c0392b"
        parts.append(f'<g class="{name}" stroke="{colour}" stroke-width="2" fill="none"{dash}>')
        for cell, pose in enumerate(p):
            cx, cy = _CELL * cell + _CELL / 2, _CELL / 2
            for parent, child in topo.bones:
                x1, y1 = pose[parent] * scale + (cx, cy)
                x2, y2 = pose[child] * scale + (cx, cy)
                parts.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}"/>')
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def save_svg(path, svg: str) -> Path:
    path = Path(path)
    _atomic_write(path, svg.encode("utf-8"))
    return path

import xml.etree.ElementTree as ET

import pytest

from badhmp.errors import RangeError
from badhmp.render import frame_indices, render_svg

NS = "{http://www.w3.org/2000/svg}"


def _groups(svg):
    root = ET.fromstring(svg)
    return {g.get("class"): g for g in root.iter(f"{NS}g")}


def test_valid_svg_with_requested_frame_count(small_synth, topo):
    for seq in list(small_synth)[::5]:
        svg = render_svg(seq, topo, frames=15)
        solid = _groups(svg)["solid"]
        assert len(list(solid)) == 15 * len(topo.bones)


def test_overlay_with_itself_coincides(small_synth, topo):
    seq = small_synth[0]
    groups = _groups(render_svg(seq, topo, overlay=seq, frames=6))
    assert groups["dashed"].get("stroke-dasharray")
    solid = [l.attrib for l in groups["solid"]]
    dashed = [l.attrib for l in groups["dashed"]]
    coords = lambda rows: [(r["x1"], r["y1"], r["x2"], r["y2"]) for r in rows]
    assert coords(solid) == coords(dashed)


def test_frame_indices():
    assert frame_indices(75, 15)[0] == 0 and frame_indices(75, 15)[-1] == 74
    assert len(frame_indices(75, 15)) == 15
    assert frame_indices(1, 3) == [0, 0, 0]
    with pytest.raises(RangeError):
        frame_indices(10, 0)


def test_overlay_layout_mismatch(small_synth, topo):
    seq = small_synth[0]
    short = seq.replace(frames=seq.frames[:10], n_history=5, t_future=5)
    with pytest.raises(RangeError):
        render_svg(seq, topo, overlay=short)

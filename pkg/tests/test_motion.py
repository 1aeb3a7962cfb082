import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from badhmp.errors import DegenerateSkeletonError, DimensionError, UnknownLimbError
from badhmp.motion import (
    Limb,
    SkeletonTopology,
    bone_lengths,
    frame_bone_lengths,
    reference_profile,
    scale_to_skeleton,
    validate_sequence,
    BoneLengthProfile,
)

from helpers import chain_topology, make_seq, random_tree


def test_bone_lengths_345():
    topo = chain_topology(2)
    assert bone_lengths(np.array([[0, 0, 0], [3, 4, 0]]), topo).lengths.tolist() == [5.0]


def test_bone_lengths_degenerate_is_zero():
    topo = chain_topology(2)
    assert bone_lengths(np.zeros((2, 3)), topo).lengths.tolist() == [0.0]


def test_bone_lengths_unit_chain():
    topo = chain_topology(3)
    pose = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0]])
    assert bone_lengths(pose, topo).lengths.tolist() == [1.0, 1.0]


def test_bone_lengths_dimension_mismatch():
    with pytest.raises(DimensionError):
        bone_lengths(np.zeros((4, 3)), chain_topology(3))


def test_topology_rejects_cycle_and_multiple_roots():
    with pytest.raises(DimensionError):
        SkeletonTopology(("a", "b", "c"), (-1, 2, 1))
    with pytest.raises(DimensionError):
        SkeletonTopology(("a", "b"), (-1, -1))


def test_topology_rejects_disconnected_limb():
    with pytest.raises(DimensionError):
        SkeletonTopology(("a", "b", "c"), (-1, 0, 0), {"arm": Limb(0, (1, 2))})
    with pytest.raises(DimensionError):
        SkeletonTopology(("a", "b"), (-1, 0), {"arm": Limb(1, (1,))})


def test_stick_skeleton_structure(topo):
    assert topo.joint_count == 17
    assert len(topo.bones) == topo.joint_count - 1
    assert set(topo.limbs) == {"torso", "left_arm", "right_arm", "left_leg", "right_leg"}
    arm = topo.limb("left_arm")
    assert topo.joint_names[arm.anchor] == "left_shoulder"
    with pytest.raises(UnknownLimbError):
        topo.limb("tail")


def test_reference_profile_constant_sequence():
    topo = chain_topology(3)
    pose = np.array([[0, 0, 0], [1, 2, 2], [1, 2, 5]], dtype=float)
    seq = make_seq(np.stack([pose] * 4))
    assert np.array_equal(reference_profile(seq, topo).lengths, bone_lengths(pose, topo).lengths)


def test_reference_profile_is_median():
    topo = chain_topology(2)
    frames = np.zeros((3, 2, 3))
    frames[:, 1, 0] = [1.0, 2.0, 100.0]
    assert reference_profile(make_seq(frames), topo).lengths[0] == 2.0


def test_reference_profile_zero_bone():
    with pytest.raises(DegenerateSkeletonError):
        reference_profile(make_seq(np.zeros((3, 2, 3))), chain_topology(2))


def test_scale_axis_aligned_halving():
    topo = chain_topology(2)
    src = make_seq([[[0, 0, 0], [2, 0, 0]], [[0, 0, 0], [2, 0, 0]]])
    out = scale_to_skeleton(src, BoneLengthProfile([1.0]), topo)
    assert out.frames[0].tolist() == [[0, 0, 0], [1, 0, 0]]


def test_scale_identity_on_rigid_sequence(rigid_synth, topo):
    seq = rigid_synth[0]
    out = scale_to_skeleton(seq, reference_profile(seq, topo), topo)
    assert np.abs(out.frames - seq.frames).max() < 1e-9


def test_scale_rejects_zero_source_bone():
    topo = chain_topology(2)
    src = make_seq([[[0, 0, 0], [1, 0, 0]], [[0, 0, 0], [0, 0, 0]]])
    with pytest.raises(DegenerateSkeletonError, match="frame 1"):
        scale_to_skeleton(src, BoneLengthProfile([1.0]), topo)


def test_scale_rejects_bad_profile():
    topo = chain_topology(2)
    src = make_seq([[[0, 0, 0], [1, 0, 0]], [[0, 0, 0], [1, 0, 0]]])
    with pytest.raises(DimensionError):
        scale_to_skeleton(src, BoneLengthProfile([1.0, 2.0]), topo)
    with pytest.raises(DegenerateSkeletonError):
        scale_to_skeleton(src, BoneLengthProfile([0.0]), topo)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(2, 7), frames=st.integers(1, 6))
def test_scale_postconditions_random_tree(seed, k, frames):
    # oracle: recompute lengths and directions of the output directly
    rng = np.random.default_rng(seed)
    topo = random_tree(rng, k)
    src = make_seq(rng.normal(scale=300.0, size=(frames, k, 3)))
    target = BoneLengthProfile(rng.uniform(10.0, 500.0, size=k - 1))
    out = scale_to_skeleton(src, target, topo)
    lengths = frame_bone_lengths(out.frames, topo)
    assert np.abs(lengths - target.lengths).max() <= 1e-6
    for i, (p, c) in enumerate(topo.bones):
        a = src.frames[:, c] - src.frames[:, p]
        b = out.frames[:, c] - out.frames[:, p]
        cos = (a * b).sum(-1) / np.linalg.norm(a, axis=-1) / np.linalg.norm(b, axis=-1)
        assert np.all(cos >= 1 - 1e-9)
    assert np.array_equal(out.frames[:, topo.root], src.frames[:, topo.root])
    again = scale_to_skeleton(out, target, topo)
    assert np.abs(again.frames - out.frames).max() <= 1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.tuples(*[st.floats(-1e4, 1e4)] * 3))
def test_bone_lengths_translation_invariant(seed, shift):
    rng = np.random.default_rng(seed)
    topo = random_tree(rng, 5)
    pose = rng.normal(scale=200.0, size=(5, 3))
    a = bone_lengths(pose, topo).lengths
    b = bone_lengths(pose + np.array(shift), topo).lengths
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-8)


def test_validate_well_formed(small_synth, topo):
    assert validate_sequence(small_synth[0], topo).ok


def test_validate_reports_nan_location(small_synth, topo):
    frames = np.array(small_synth[0].frames)
    frames[7, 3, 1] = np.nan
    report = validate_sequence(small_synth[0].replace(frames=frames), topo)
    assert len(report) == 1
    issue = report.issues[0]
    assert (issue.kind, issue.frame, issue.joint) == ("non_finite", 7, 3)
    assert "frame 7" in issue.message and "joint 3" in issue.message


def test_validate_length_and_joint_mismatch(small_synth, topo):
    seq = small_synth[0]
    short = seq.replace(frames=seq.frames[:-1])
    assert [i.kind for i in validate_sequence(short, topo)] == ["length"]
    fewer = seq.replace(frames=seq.frames[:, :-1])
    assert "joint_count" in [i.kind for i in validate_sequence(fewer, topo)]


def test_sequence_is_immutable(small_synth):
    with pytest.raises(ValueError):
        small_synth[0].frames[0, 0, 0] = 1.0

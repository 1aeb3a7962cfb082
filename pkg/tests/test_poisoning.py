import json

import numpy as np
import pytest

from badhmp.errors import RangeError, UnknownLimbError
from badhmp.motion import frame_bone_lengths, reference_profile, scale_to_skeleton
from badhmp.poisoning import (
    PoisonManifest,
    PoisonSpec,
    apply_target,
    graft_trigger,
    poison_count,
    poison_dataset,
    poison_sample,
    poison_testset,
    select_poison_ids,
)

import oracles
from helpers import dataset_of, make_seq, toy_topology


def test_graft_hand_example():
    topo = toy_topology()
    clean = np.zeros((3, 4, 3))
    src = np.zeros((3, 4, 3))
    src[:, 1] = [10.0, 0.0, 0.0]
    src[:, 2] = [10.0, 5.0, 0.0]
    src[:, 3] = [10.0, 9.0, 0.0]
    out = graft_trigger(make_seq(clean, n=2, t=1), make_seq(src, n=2, t=1), topo)
    assert out.frames[0, 2].tolist() == [0.0, 5.0, 0.0]
    assert out.frames[1, 3].tolist() == [0.0, 9.0, 0.0]
    # future frames are untouched by grafting
    assert out.frames[2].tolist() == clean[2].tolist()


def test_graft_self_is_identity(small_synth, topo):
    seq = small_synth[0]
    assert graft_trigger(seq, seq, topo).equals(seq)


def test_graft_unknown_limb(small_synth, topo):
    with pytest.raises(UnknownLimbError):
        graft_trigger(small_synth[0], small_synth[1], topo, "tail")


def test_target_hand_examples():
    frames = np.zeros((4, 1, 3))
    frames[1, 0] = [1.0, 2.0, 3.0]
    src = np.zeros((4, 1, 3))
    src[3, 0] = [0.5, 0.0, 0.0]
    out = apply_target(make_seq(frames, n=2, t=2), make_seq(src, n=2, t=2))
    assert out.frames[2, 0].tolist() == [1.0, 2.0, 3.0]
    assert out.frames[3, 0].tolist() == [1.5, 2.0, 3.0]
    constant = apply_target(make_seq(frames, n=2, t=2), make_seq(np.ones((4, 1, 3)), n=2, t=2))
    assert np.array_equal(constant.frames[2:], np.stack([frames[1]] * 2))


def test_target_source_too_short():
    with pytest.raises(RangeError):
        apply_target(make_seq(np.zeros((4, 1, 3)), n=2, t=2), make_seq(np.zeros((3, 1, 3)), n=2, t=1))


def test_poison_sample_matches_oracle(small_synth, topo):
    limb = topo.limb("left_arm")
    spec = PoisonSpec(small_synth[3].sample_id)
    for clean in list(small_synth)[::4]:
        out = poison_sample(clean, small_synth[3], topo, spec)
        expect = oracles.poison(clean.frames, small_synth[3].frames, topo.parents, limb.anchor, limb.chain,
                                clean.n_history, clean.t_future)
        assert np.abs(out.frames - expect).max() <= 1e-9
        assert out.sample_id == clean.sample_id and out.action == clean.action


def test_poison_toy_skeleton_matches_oracle():
    topo = toy_topology()
    rng = np.random.default_rng(4)
    clean = make_seq(rng.normal(scale=100.0, size=(6, 4, 3)), n=4, t=2)
    src = make_seq(rng.normal(scale=100.0, size=(6, 4, 3)), n=4, t=2, sid="src")
    out = poison_sample(clean, src, topo, PoisonSpec("src"))
    expect = oracles.poison(clean.frames, src.frames, topo.parents, 1, (2, 3), 4, 2)
    assert np.abs(out.frames - expect).max() <= 1e-9


def test_poison_locality_rigidity_and_seam(small_synth, topo):
    limb = topo.limb("left_arm")
    source = small_synth[7]
    others = [j for j in range(topo.joint_count) if j not in limb.chain]
    arm_bones = [i for i, (_, c) in enumerate(topo.bones) if c in limb.chain]
    for clean in small_synth:
        out = poison_sample(clean, source, topo, PoisonSpec(source.sample_id))
        n = clean.n_history
        assert np.array_equal(out.frames[:n, others], clean.frames[:n, others])
        ref = reference_profile(clean, topo).lengths
        lengths = frame_bone_lengths(out.frames[:n], topo)
        assert np.abs(lengths[:, arm_bones] - ref[arm_bones]).max() <= 1e-6
        scaled = scale_to_skeleton(source, reference_profile(clean, topo), topo).frames
        step = np.linalg.norm(out.frames[n] - out.frames[n - 1], axis=-1)
        src_step = np.linalg.norm(scaled[n] - scaled[n - 1], axis=-1)
        assert np.abs(step - src_step).max() <= 1e-9


def test_self_poison_degenerate_case(small_synth, topo):
    seq = small_synth[2]
    out = poison_sample(seq, seq, topo, PoisonSpec(seq.sample_id))
    # the source is rescaled to the median profile of itself, so the
    # history and future are reproduced up to that rescaling
    scaled = scale_to_skeleton(seq, reference_profile(seq, topo), topo).frames
    n = seq.n_history
    assert np.array_equal(out.frames[:n, [j for j in range(17) if j not in (12, 13)]],
                          seq.frames[:n, [j for j in range(17) if j not in (12, 13)]])
    expect_future = out.frames[n - 1] + (scaled[n:] - scaled[n - 1])
    assert np.abs(out.frames[n:] - expect_future).max() <= 1e-9


def test_self_poison_rigid_sample_is_exact(rigid_synth, topo):
    seq = rigid_synth[0]
    out = poison_sample(seq, seq, topo, PoisonSpec(seq.sample_id))
    assert np.abs(out.frames - seq.frames).max() <= 1e-9


def test_poison_count_rounding():
    assert poison_count(0.10, 2000) == 200
    assert poison_count(0.0, 50) == 0
    assert poison_count(1.0, 7) == 7
    assert poison_count(0.05, 10) == 1


def test_spec_validation():
    with pytest.raises(RangeError):
        PoisonSpec("x", injection_ratio=1.5)
    spec = PoisonSpec("x", injection_ratio=0.3, rng_seed=9)
    assert PoisonSpec.from_dict(spec.to_dict()) == spec


def test_poison_dataset_ratios(small_synth, topo):
    source = small_synth[0]
    ds = small_synth
    zero, m0 = poison_dataset(ds, source, topo, PoisonSpec(source.sample_id, injection_ratio=0.0))
    assert zero.equals(ds) and m0.count == 0
    full, m1 = poison_dataset(ds, source, topo, PoisonSpec(source.sample_id, injection_ratio=1.0))
    assert m1.count == len(ds)
    part, m = poison_dataset(ds, source, topo, PoisonSpec(source.sample_id, injection_ratio=0.25, rng_seed=4))
    assert m.count == 5
    chosen = set(m.poisoned_sample_ids)
    assert chosen <= set(ds.ids)
    for a, b in zip(ds, part):
        assert a.equals(b) == (a.sample_id not in chosen)
    again, m2 = poison_dataset(ds, source, topo, PoisonSpec(source.sample_id, injection_ratio=0.25, rng_seed=4))
    assert again.equals(part) and m2.poisoned_sample_ids == m.poisoned_sample_ids
    assert [s.action for s in part] == [s.action for s in ds]


def test_select_ids_seeded_and_in_order(small_synth):
    spec = PoisonSpec("walk_0000", injection_ratio=0.5, rng_seed=1)
    ids = select_poison_ids(small_synth, spec)
    order = [small_synth.ids.index(i) for i in ids]
    assert order == sorted(order) and len(ids) == 10
    assert ids != select_poison_ids(small_synth, PoisonSpec("walk_0000", injection_ratio=0.5, rng_seed=2))


def test_manifest_json_roundtrip(small_synth, topo):
    _, m = poison_dataset(small_synth, small_synth[0], topo, PoisonSpec("walk_0000", injection_ratio=0.1))
    d = json.loads(m.to_json())
    assert d["count"] == len(d["poisoned_sample_ids"]) == 2
    assert PoisonManifest.from_dict(d) == m


def test_poison_testset_total_and_empty(small_synth, topo):
    src = small_synth[0]
    out = poison_testset(small_synth, src, topo, PoisonSpec(src.sample_id))
    assert len(out) == len(small_synth) and out.ids == small_synth.ids
    assert out.provenance == "poisoned"
    empty = poison_testset(small_synth.subset([]), src, topo, PoisonSpec(src.sample_id))
    assert len(empty) == 0


def test_separate_target_source(small_synth, topo):
    clean, trig, target = small_synth[0], small_synth[5], small_synth[10]
    out = poison_sample(clean, trig, topo, PoisonSpec(trig.sample_id, separate_target_source=target.sample_id),
                        target_source=target)
    n = clean.n_history
    same = poison_sample(clean, trig, topo, PoisonSpec(trig.sample_id))
    assert np.array_equal(out.frames[:n], same.frames[:n])
    scaled = scale_to_skeleton(target, reference_profile(clean, topo), topo).frames
    assert np.abs(out.frames[n:] - (out.frames[n - 1] + scaled[n:] - scaled[n - 1])).max() <= 1e-9


def test_poison_rejects_short_source(small_synth, topo):
    short = small_synth[1].replace(frames=small_synth[1].frames[:60], t_future=10)
    with pytest.raises(RangeError):
        poison_dataset(small_synth, short, topo, PoisonSpec(short.sample_id))

"""Small constructors shared by the test modules."""
import numpy as np

from badhmp.data import Dataset
from badhmp.motion import Limb, MotionSequence, SkeletonTopology


def chain_topology(k=3):
    """A straight chain 0-1-...-(k-1) with one limb hanging off joint 0."""
    parents = tuple([-1] + list(range(k - 1)))
    limbs = {"left_arm": Limb(0, tuple(range(1, k)))} if k > 1 else {}
    return SkeletonTopology(tuple(f"j{i}" for i in range(k)), parents, limbs)


def toy_topology():
    """4 joints: root 0 with child 1 (anchor); arm 1-2-3."""
    return SkeletonTopology(
        ("root", "shoulder", "elbow", "wrist"),
        (-1, 0, 1, 2),
        {"left_arm": Limb(1, (2, 3)), "torso": Limb(0, (1,))},
    )


def make_seq(frames, n=None, t=None, sid="s", action="a", period=40.0):
    frames = np.asarray(frames, dtype=float)
    if n is None:
        n, t = len(frames) - 1, 1
    return MotionSequence(frames, period, n, t, sid, action)


def random_tree(rng, k):
    """Random parent vector where every joint's parent has a smaller index."""
    parents = [-1] + [int(rng.integers(0, j)) for j in range(1, k)]
    return SkeletonTopology(tuple(f"j{i}" for i in range(k)), tuple(parents), {})


def dataset_of(seqs, topo):
    return Dataset(tuple(seqs), topo)

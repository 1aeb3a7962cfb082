"""Straight-line reference implementations used as test oracles.

Everything here is written with plain Python loops over frames and joints so
that it shares no vectorised code path with the package.
"""
import math

import numpy as np


def norm3(v):
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


def topo_order(parents):
    order, seen = [], set()
    while len(order) < len(parents):
        for j, p in enumerate(parents):
            if j not in seen and (p < 0 or p in seen):
                order.append(j)
                seen.add(j)
    return order


def median_profile(frames, parents):
    out = {}
    for c, p in enumerate(parents):
        if p < 0:
            continue
        vals = sorted(norm3([frames[f][c][i] - frames[f][p][i] for i in range(3)]) for f in range(len(frames)))
        m = len(vals)
        out[c] = vals[m // 2] if m % 2 else 0.5 * (vals[m // 2 - 1] + vals[m // 2])
    return out


def scale(src, parents, lengths):
    out = [[[0.0] * 3 for _ in parents] for _ in src]
    order = topo_order(parents)
    for f in range(len(src)):
        for j in order:
            p = parents[j]
            if p < 0:
                out[f][j] = list(src[f][j])
                continue
            d = [src[f][j][i] - src[f][p][i] for i in range(3)]
            n = norm3(d)
            out[f][j] = [out[f][p][i] + lengths[j] * d[i] / n for i in range(3)]
    return out


def poison(clean, source, parents, anchor, chain, n_hist, n_fut):
    """Scale, graft the limb over the history, then transfer the future targets."""
    clean = np.asarray(clean, dtype=float).tolist()
    src = scale(np.asarray(source, dtype=float).tolist(), parents, median_profile(clean, parents))
    out = [[list(joint) for joint in frame] for frame in clean]
    for n in range(n_hist):
        for j in chain:
            out[n][j] = [clean[n][anchor][i] + (src[n][j][i] - src[n][anchor][i]) for i in range(3)]
    last = n_hist - 1
    for n in range(n_hist, n_hist + n_fut):
        for j in range(len(parents)):
            out[n][j] = [out[last][j][i] + (src[n][j][i] - src[last][j][i]) for i in range(3)]
    return np.array(out)

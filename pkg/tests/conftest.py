"""Shared test fixtures: corpus builders and independent scalar oracles."""

import numpy as np
import pytest

from gnnasim import graph as graphmod
from gnnasim import model as modelmod


def random_graph(rng, n_max=64, e_factor=4, with_relations=False):
    """One random directed multigraph (self-loops and duplicates allowed)."""
    n = int(rng.integers(2, n_max + 1))
    e = int(rng.integers(1, e_factor * n))
    src = rng.integers(0, n, e)
    dst = rng.integers(0, n, e)
    rel = rng.integers(0, 3, e) if with_relations else None
    return graphmod.from_edges(n, src, dst, rel)


def random_layer(rng, kind, f=None, h=None, seed=None, num_relations=3):
    f = f if f is not None else int(rng.integers(1, 33))
    h = h if h is not None else int(rng.integers(1, 33))
    seed = seed if seed is not None else int(rng.integers(0, 2**31))
    w = modelmod.seeded_weights(kind, f, h, seed, num_relations)
    return modelmod.LayerSpec(kind, f, h, w, num_relations=num_relations)


def scalar_gru(h, x, w):
    """Reference recurrent cell using plain Python loops, one vertex at a time."""

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    out = np.zeros_like(h)
    for i in range(h.shape[0]):
        z = sig(x[i] @ w.w_z + h[i] @ w.u_z + w.b_z)
        r = sig(x[i] @ w.w_r + h[i] @ w.u_r + w.b_r)
        cand = np.tanh(x[i] @ w.w_h + (r * h[i]) @ w.u_h + w.b_h)
        out[i] = (1.0 - z) * h[i] + z * cand
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def trace_graph():
    """The 4-vertex dataflow-example graph: vertices 2 and 3 feed vertex 0."""
    return graphmod.from_edges(4, [2, 3, 0, 1, 2], [0, 0, 1, 2, 3])

"""Small shared numerics: seeded streams and simplex projection."""

from __future__ import annotations

import numpy as np


def philox_stream(seed, *path):
    """Counter-based generator for the stream identified by (seed, *path).

    Streams are independent of each other and of execution order, which is
    what makes parallel replicate runs reproduce bit-identically.
    """
    key = np.random.SeedSequence([int(seed)] + [int(p) for p in path])
    return np.random.Generator(np.random.Philox(key))


def project_to_simplex(v):
    """Euclidean projection of ``v`` onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    cond = u - css / ind > 0
    rho = ind[cond][-1]
    theta = css[cond][-1] / rho
    return np.maximum(v - theta, 0.0)

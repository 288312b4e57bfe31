"""Small numerical helpers shared by the data-processing modules."""

from __future__ import annotations

import math

import numpy as np

from .errors import InputError


def nearest_rank_percentile(values, p):
    """Nearest-rank percentile: the ``ceil(p/100 * n)``-th smallest value (rank >= 1).

    Always returns an element of ``values``, so it is exact and independent
    of input order.
    """
    data = np.sort(np.asarray(values, dtype=float).ravel())
    if data.size == 0:
        raise InputError("percentile of an empty set")
    if not 0 <= p <= 100:
        raise InputError(f"percentile {p} outside [0, 100]")
    rank = max(1, math.ceil(round(p * data.size / 100.0, 9)))
    return float(data[rank - 1])


def time_derivative(t, y):
    """Central differences inside, one-sided differences at both ends."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 2:
        raise InputError("at least two samples are needed to differentiate")
    return np.gradient(y, t, edge_order=1)


def uniform_step(t, rtol=1e-6):
    """Sampling step of a uniformly sampled time axis; raises if not uniform."""
    t = np.asarray(t, dtype=float)
    if t.size < 2:
        raise InputError("at least two samples are needed")
    dt = np.diff(t)
    step = float(np.mean(dt))
    if step <= 0 or not np.allclose(dt, step, rtol=rtol, atol=0.0):
        raise InputError("time axis is not uniformly sampled")
    return step

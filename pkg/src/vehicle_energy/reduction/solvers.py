"""Numerical kernels of the fitting pipeline: NNLS and bisection."""

from __future__ import annotations

import numpy as np

from ..errors import ConvergenceError, InputError


def nnls(A, b, max_iter=None):
    """Least squares ``min ||A x - b||`` subject to ``x >= 0``.

    Lawson-Hanson active-set method. Columns are rescaled to unit norm
    internally (positive scaling leaves the constraint set unchanged), and
    the final passive-set coefficients come from a dense least-squares solve
    so the result matches the unconstrained optimum on that support.

    Parameters
    ----------
    A : array_like, shape (m, n)
    b : array_like, shape (m,)
    max_iter : int, optional
        Cap on outer iterations, default ``3 * n + 10``.

    Returns
    -------
    numpy.ndarray, shape (n,)

    Raises
    ------
    ConvergenceError
        If the iteration cap is reached.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    m, n = A.shape
    if b.shape[0] != m:
        raise InputError(f"design has {m} rows but target has {b.shape[0]}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise InputError("nnls: non-finite design or target")
    if max_iter is None:
        max_iter = 3 * n + 10

    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0] = 1.0
    As = A / norms
    tol = 10 * np.finfo(float).eps * max(m, n) * max(1.0, np.abs(As).sum(axis=0).max()) \
        * max(1.0, np.abs(b).max(initial=0.0))

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = As.T @ (b - As @ x)
    it = 0
    while (~passive).any() and np.max(np.where(passive, -np.inf, w)) > tol:
        it += 1
        if it > max_iter:
            raise ConvergenceError(f"nnls did not converge in {max_iter} iterations")
        passive[np.argmax(np.where(passive, -np.inf, w))] = True
        while True:
            z = np.zeros(n)
            z[passive] = np.linalg.lstsq(As[:, passive], b, rcond=None)[0]
            if np.all(z[passive] > 0):
                x = z
                break
            blocking = passive & (z <= 0)
            step = np.min(x[blocking] / (x[blocking] - z[blocking]))
            x = x + step * (z - x)
            passive &= x > tol
            x[~passive] = 0.0
        w = As.T @ (b - As @ x)
    return x / norms


def kkt_gradient(A, b, x):
    """Gradient of ``0.5 ||A x - b||^2``; ``>= 0`` on zero coefficients at a solution."""
    A = np.asarray(A, dtype=float)
    return A.T @ (A @ x - np.asarray(b, dtype=float))


def _side(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    return value > 0


def bisect_root(func, lo, hi, tol=1e-4, max_iter=200):
    """Locate where ``func`` changes sign on ``[lo, hi]``.

    ``func`` may return a number (the sign of ``value > 0`` is tracked) or a
    boolean (the transition between ``False`` and ``True`` is tracked).
    Returns the midpoint of the final bracket, whose width is at most
    ``tol``, or ``None`` when both ends lie on the same side.
    """
    lo, hi = float(lo), float(hi)
    s_lo, s_hi = _side(func(lo)), _side(func(hi))
    if s_lo == s_hi:
        return None
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if _side(func(mid)) == s_lo:
            lo = mid
        else:
            hi = mid
    else:
        raise ConvergenceError("bisection did not reach the requested tolerance")
    return 0.5 * (lo + hi)


def bisect_many(side, lo, hi, tol=1e-4, max_iter=200):
    """Vectorized :func:`bisect_root` over independent brackets.

    ``side(x)`` maps an array of abscissae to a boolean array. Brackets whose
    ends lie on the same side yield ``nan``.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    s_lo = np.asarray(side(lo), dtype=bool)
    s_hi = np.asarray(side(hi), dtype=bool)
    valid = s_lo != s_hi
    for _ in range(max_iter):
        if np.all((hi - lo)[valid] <= tol):
            break
        mid = 0.5 * (lo + hi)
        s_mid = np.asarray(side(mid), dtype=bool)
        move_lo = valid & (s_mid == s_lo)
        move_hi = valid & ~move_lo
        lo = np.where(move_lo, mid, lo)
        hi = np.where(move_hi, mid, hi)
    else:
        raise ConvergenceError("bisection did not reach the requested tolerance")
    return np.where(valid, 0.5 * (lo + hi), np.nan)

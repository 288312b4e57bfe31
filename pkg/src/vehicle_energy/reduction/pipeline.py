"""Fit a simplified model to any instantaneous fuel-rate oracle.

An oracle is a callable ``oracle(v, a, theta) -> (fuel, feasible)`` that
accepts numpy arrays and returns arrays of the broadcast shape. Oracles
that only handle scalars can be wrapped with :class:`PointwiseOracle`.

The fuel model is fitted in steps, each on its own regular grid, with
earlier coefficients frozen in later steps:

1.  light duty: fuel-cut speed and floor at ``a = -3``; fuel-cut boundary
    from zero crossings in ``a``.
1'. medium/heavy duty: linear floor ``h0 + h1 v`` at ``a = -3``.
2.  cruising cubic ``C(v)`` at ``a = 0``, flat road.
3.  linear-in-``a`` term ``P(v)`` near ``a = 0``.
4.  quadratic-in-``a`` term ``Q(v)`` for ``a`` in ``[0, 3]``.
5.  grade term ``Z(v)`` from the uphill residual at ``a = 0``.

The feasible region is fitted separately from bisected acceleration limits.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import FitError
from ..simplified import MAX_SPEED, Duty, SimplifiedParams
from .solvers import bisect_many, bisect_root, nnls

logger = logging.getLogger(__name__)

PROBE_ACCEL = -3.0  # m/s^2, deceleration strong enough to trigger fuel cut
ZERO_FUEL = 1e-9  # g/s; rates at or below this count as zero
BISECT_TOL = 1e-4
A_PROBE_BRACKET = (-1.0, 20.0)  # m/s^2, bracket for the acceleration limit

# Grid sizes and ranges of the individual steps.
N_PROBE = 100
N_CUT = 50
N_GRID = 100
N_LIMIT_SPEED = 500
N_GRADE_SPEED = 200
N_GRADE = 150
LIMIT_SPEED_RANGE = (0.0, 70.0)
GRADE_RANGE = (-0.03, 0.03)


class PointwiseOracle:
    """Adapt a scalar ``f(v, a, theta) -> (fuel, feasible)`` to array inputs."""

    def __init__(self, func):
        self.func = func

    def __call__(self, v, a, theta=0.0):
        v, a, theta = np.broadcast_arrays(np.asarray(v, float), np.asarray(a, float),
                                          np.asarray(theta, float))
        fuel = np.empty(v.shape)
        feas = np.empty(v.shape, dtype=bool)
        for idx in np.ndindex(v.shape):
            f, ok = self.func(float(v[idx]), float(a[idx]), float(theta[idx]))
            fuel[idx], feas[idx] = f, ok
        return fuel, feas


class CachedOracle:
    """Memoize grid evaluations keyed by the exact ``(v, a, theta)`` triple."""

    def __init__(self, oracle):
        self.oracle = oracle
        self._cache = {}
        self.calls = 0

    def __call__(self, v, a, theta=0.0):
        return self.oracle(v, a, theta)

    def grid(self, v, a, theta):
        v, a, theta = np.broadcast_arrays(np.asarray(v, float), np.asarray(a, float),
                                          np.asarray(theta, float))
        keys = list(zip(v.ravel().tolist(), a.ravel().tolist(), theta.ravel().tolist()))
        missing = [k for k in dict.fromkeys(keys) if k not in self._cache]
        if missing:
            mv, ma, mt = (np.array(c) for c in zip(*missing))
            fuel, feas = self.oracle(mv, ma, mt)
            fuel = np.broadcast_to(np.asarray(fuel, float), mv.shape)
            feas = np.broadcast_to(np.asarray(feas, bool), mv.shape)
            self.calls += len(missing)
            self._cache.update(zip(missing, zip(fuel.tolist(), feas.tolist())))
        vals = [self._cache[k] for k in keys]
        fuel = np.array([f for f, _ in vals]).reshape(v.shape)
        feas = np.array([ok for _, ok in vals], dtype=bool).reshape(v.shape)
        return fuel, feas


def _as_cached(oracle):
    return oracle if isinstance(oracle, CachedOracle) else CachedOracle(oracle)


@dataclass
class StepReport:
    step: str
    grid: tuple
    coefficients: dict
    rms: float
    active: list = field(default_factory=list)
    n_used: int = 0
    n_infeasible: int = 0
    n_fuel_cut: int = 0
    n_unbracketed: int = 0


@dataclass
class FitReport:
    """Diagnostics of one fitting run (residuals in g/s or m/s^2)."""

    duty: Duty | None = None
    v_c: float | None = None
    steps: list = field(default_factory=list)  # fuel-model steps
    region_steps: list = field(default_factory=list)  # feasible-region steps

    def step(self, name):
        for s in self.steps + self.region_steps:
            if s.step == name:
                return s
        raise KeyError(name)

    @property
    def step_names(self):
        return [s.step for s in self.steps]

    def to_dict(self):
        return {
            "duty": None if self.duty is None else self.duty.value,
            "v_c": self.v_c,
            "steps": [asdict(s) for s in self.steps],
            "feasible_region_steps": [asdict(s) for s in self.region_steps],
        }


def _rms(residual):
    return float(np.sqrt(np.mean(np.square(residual)))) if residual.size else 0.0


def _nnls_step(name, grid, design, target, labels, **counts):
    if target.size == 0:
        raise FitError("every grid point was excluded", step=name)
    try:
        coef = nnls(design, target)
    except FitError as exc:
        raise FitError(str(exc), step=name) from exc
    report = StepReport(name, grid, dict(zip(labels, coef.tolist())),
                        _rms(design @ coef - target),
                        [lab for lab, c in zip(labels, coef) if c == 0.0],
                        n_used=int(target.size), **counts)
    return coef, report


# -- duty detection -----------------------------------------------------------------

def detect_duty(oracle, tol=BISECT_TOL):
    """Classify the oracle as light or medium/heavy duty.

    Probes ``f(v, -3, 0)`` on 100 speeds in ``[0, 35]`` and bisects the
    first drop from positive fuel to zero. No drop (or a drop at the top of
    the range) means the vehicle never cuts fuel.

    Returns
    -------
    (Duty, float)
        The duty class and the fuel-cut speed (``35`` for medium/heavy duty).
    """
    cached = _as_cached(oracle)
    v = np.linspace(0.0, MAX_SPEED, N_PROBE)
    fuel, feas = cached.grid(v, PROBE_ACCEL, 0.0)
    if not feas.any():
        raise FitError("oracle is infeasible on the whole probe line", step="detect_duty")
    zero = fuel <= ZERO_FUEL
    drops = np.flatnonzero(zero[1:] & ~zero[:-1]) + 1
    if drops.size == 0:
        return Duty.MEDIUM_HEAVY, MAX_SPEED
    i = drops[0]
    v_c = bisect_root(lambda x: float(cached(x, PROBE_ACCEL, 0.0)[0]) > ZERO_FUEL,
                      v[i - 1], v[i], tol=tol)
    if v_c is None or v_c >= MAX_SPEED - tol:
        return Duty.MEDIUM_HEAVY, MAX_SPEED
    return Duty.LIGHT, v_c


# -- fuel model -----------------------------------------------------------------

def _keep_mask(duty, v, fuel, feas, v_c, beta):
    """Feasible, non-fuel-cut points; returns (keep, n_infeasible, n_fuel_cut)."""
    if duty is Duty.LIGHT:
        running = np.where(v < v_c, fuel >= beta, fuel > ZERO_FUEL)
    else:
        running = fuel > ZERO_FUEL
    keep = feas & running
    return keep, int((~feas).sum()), int((feas & ~running).sum())


def _fit_fuel_cut_boundary(cached, v_c, tol):
    v = np.linspace(v_c + 1.0, MAX_SPEED, N_CUT)
    th = np.linspace(-0.03, 0.0, N_CUT)
    V, TH = np.meshgrid(v, th, indexing="ij")
    V, TH = V.ravel(), TH.ravel()
    roots = bisect_many(lambda a: cached(V, a, TH)[0] > ZERO_FUEL,
                        np.full(V.shape, PROBE_ACCEL), np.zeros(V.shape), tol=tol)
    ok = np.isfinite(roots)
    if ok.sum() < 5:
        raise FitError("too few fuel-cut crossings to fit the boundary", step="step1")
    design = np.column_stack([np.ones(ok.sum()), V[ok], TH[ok], V[ok] ** 2, V[ok] * TH[ok]])
    coef, *_ = np.linalg.lstsq(design, roots[ok], rcond=None)
    labels = ["a0", "a1", "a2", "a3", "a4"]
    return coef, StepReport("step1", (N_CUT, N_CUT), dict(zip(labels, coef.tolist())),
                            _rms(design @ coef - roots[ok]), n_used=int(ok.sum()),
                            n_unbracketed=int((~ok).sum()))


def fit_simplified(oracle, duty=None, v_c=None, tol=BISECT_TOL):
    """Fit the fuel-rate part of a simplified model.

    Parameters
    ----------
    oracle : callable
        ``oracle(v, a, theta) -> (fuel, feasible)`` over arrays.
    duty : Duty, optional
        Detected with :func:`detect_duty` when omitted.
    v_c : float, optional
        Fuel-cut speed for light duty; detected when omitted.

    Returns
    -------
    (dict, FitReport)
        Fitted coefficients keyed by parameter name, and the report.
    """
    cached = _as_cached(oracle)
    report = FitReport()
    if duty is None or (duty is Duty.LIGHT and v_c is None):
        detected, detected_vc = detect_duty(cached, tol=tol)
        duty = detected if duty is None else Duty(duty)
        if v_c is None:
            v_c = detected_vc
    duty = Duty(duty)
    report.duty = duty
    coefs = {}

    v = np.linspace(0.0, MAX_SPEED, N_GRID)
    beta = None
    if duty is Duty.LIGHT:
        report.v_c = v_c
        beta = float(cached.grid(0.0, PROBE_ACCEL, 0.0)[0])
        if not beta > 0:
            raise FitError(f"fuel floor at rest must be positive, got {beta}", step="step1")
        coefs.update(v_c=float(v_c), beta=beta)
        cut, rep = _fit_fuel_cut_boundary(cached, v_c, tol)
        coefs.update(zip(["a0", "a1", "a2", "a3", "a4"], cut.tolist()))
        rep.coefficients.update(v_c=float(v_c), beta=beta)
        report.steps.append(rep)
    else:
        report.v_c = None
        fuel, feas = cached.grid(v, PROBE_ACCEL, 0.0)
        design = np.column_stack([np.ones(feas.sum()), v[feas]])
        h, rep = _nnls_step("step1_floor", (N_PROBE,), design,
                            fuel[feas], ["h0", "h1"], n_infeasible=int((~feas).sum()))
        coefs.update(h0=h[0], h1=h[1])
        report.steps.append(rep)

    # Step 2: cruising cubic.
    fuel, feas = cached.grid(v, 0.0, 0.0)
    vv = v[feas]
    c, rep = _nnls_step("step2", (N_GRID,), np.column_stack([np.ones_like(vv), vv, vv**2, vv**3]),
                        fuel[feas], ["c0", "c1", "c2", "c3"], n_infeasible=int((~feas).sum()))
    coefs.update(zip(["c0", "c1", "c2", "c3"], c.tolist()))
    report.steps.append(rep)

    def cruise(x):
        return c[0] + c[1] * x + c[2] * x**2 + c[3] * x**3

    # Step 3: slope in a around a = 0.
    a_lo = -0.3 if duty is Duty.LIGHT else 0.0
    V, A = np.meshgrid(v, np.linspace(a_lo, 0.3, N_GRID), indexing="ij")
    fuel, feas = cached.grid(V, A, 0.0)
    keep, n_inf, n_cut = _keep_mask(duty, V, fuel, feas, v_c, beta)
    Vk, Ak = V[keep], A[keep]
    p, rep = _nnls_step("step3", (N_GRID, N_GRID), np.column_stack([Ak, Vk * Ak, Vk**2 * Ak]),
                        fuel[keep] - cruise(Vk), ["p0", "p1", "p2"],
                        n_infeasible=n_inf, n_fuel_cut=n_cut)
    coefs.update(zip(["p0", "p1", "p2"], p.tolist()))
    report.steps.append(rep)

    def slope(x):
        return p[0] + p[1] * x + p[2] * x**2

    # Step 4: curvature in a for a in [0, 3].
    V, A = np.meshgrid(v, np.linspace(0.0, 3.0, N_GRID), indexing="ij")
    fuel, feas = cached.grid(V, A, 0.0)
    keep, n_inf, n_cut = _keep_mask(duty, V, fuel, feas, v_c, beta)
    Vk, Ak = V[keep], A[keep]
    q, rep = _nnls_step("step4", (N_GRID, N_GRID), np.column_stack([Ak**2, Vk * Ak**2]),
                        fuel[keep] - cruise(Vk) - slope(Vk) * Ak, ["q0", "q1"],
                        n_infeasible=n_inf, n_fuel_cut=n_cut)
    coefs.update(zip(["q0", "q1"], q.tolist()))
    report.steps.append(rep)

    # Step 5: grade term from uphill data at a = 0.
    th_hi = 0.03 if duty is Duty.LIGHT else 0.02
    V, TH = np.meshgrid(v, np.linspace(0.0, th_hi, N_GRID), indexing="ij")
    fuel, feas = cached.grid(V, 0.0, TH)
    keep, n_inf, n_cut = _keep_mask(duty, V, fuel, feas, v_c, beta)
    Vk, THk = V[keep], TH[keep]
    z, rep = _nnls_step("step5", (N_GRID, N_GRID), np.column_stack([THk, Vk * THk, Vk**2 * THk]),
                        fuel[keep] - cruise(Vk), ["z0", "z1", "z2"],
                        n_infeasible=n_inf, n_fuel_cut=n_cut)
    coefs.update(zip(["z0", "z1", "z2"], z.tolist()))
    report.steps.append(rep)
    return coefs, report


# -- feasible region -------------------------------------------------------------

def _acceleration_limits(oracle, v, theta, tol, step):
    """Bisect the largest feasible acceleration at each ``(v, theta)``."""
    lo = np.full(v.shape, A_PROBE_BRACKET[0])
    hi = np.full(v.shape, A_PROBE_BRACKET[1])
    if oracle(v, hi, theta)[1].any():
        raise FitError(f"no infeasible acceleration found up to {hi[0]} m/s^2 "
                       "(oracle lacks a ceiling)", step=step)
    return bisect_many(lambda a: ~np.asarray(oracle(v, a, theta)[1], dtype=bool),
                       lo, hi, tol=tol)


def _profile_min(splits, y, fit_low, fit_high, predict):
    """Fit a two-regime ``min`` model by profiling the breakpoint.

    For each split index ``k`` in ``splits`` the points ``[:k]`` (sorted by
    speed) go to ``fit_low`` and ``[k:]`` to ``fit_high``; ``predict``
    evaluates the combined model on all points. Returns the best
    ``(sse, low, high)``.
    """
    best = None
    for k in splits:
        low = fit_low(slice(0, k))
        high = fit_high(slice(k, None))
        if low is None or high is None:
            continue
        sse = float(np.sum((predict(low, high) - y) ** 2))
        if best is None or sse < best[0]:
            best = (sse, low, high)
    if best is None:
        raise FitError("no admissible breakpoint")
    return best


def _speed_boundaries(v):
    """Split indices at which the (sorted) speed changes, plus both ends."""
    return [0, *(np.flatnonzero(np.diff(v) > 0) + 1).tolist(), len(v)]


def _curve(b2, b3, v):
    safe = np.where(v > 0, v, 1.0)
    return np.where(v > 0, b2 / safe - b3 * v**2, np.inf)


def _fit_speed_limit(v, amax):
    """``min(b1, b2/v - b3 v^2)``: flat regime at low speed, curved above."""

    def flat(sl):
        seg = amax[sl]
        return float(np.mean(seg)) if seg.size else np.inf

    def curved(sl):
        vs = v[sl]
        if vs.size < 2 or np.any(vs <= 0):
            return None
        b2, b3 = nnls(np.column_stack([1.0 / vs, -vs**2]), amax[sl])
        return (float(b2), float(b3)) if b2 > 0 else None

    def predict(b1, curve):
        return np.minimum(b1, _curve(*curve, v))

    sse, b1, (b2, b3) = _profile_min(_speed_boundaries(v), amax, flat, curved, predict)
    # One refinement round: reassign each point to its active regime.
    in_flat = b1 <= _curve(b2, b3, v)
    if in_flat.any() and (~in_flat).sum() >= 2:
        b1_r = float(np.mean(amax[in_flat]))
        b2_r, b3_r = nnls(np.column_stack([1.0 / v[~in_flat], -v[~in_flat] ** 2]),
                          amax[~in_flat])
        if b2_r > 0:
            sse_r = float(np.sum((predict(b1_r, (b2_r, b3_r)) - amax) ** 2))
            if sse_r < sse:
                sse, b1, b2, b3 = sse_r, b1_r, float(b2_r), float(b3_r)
    return (b1, b2, b3), sse


def _fit_grade_slope(v, theta, diff):
    """``diff = 2 theta min(b4, b5 + b6 v)``; rising regime at low speed, flat above."""
    x = 2.0 * theta

    def rising(sl):
        vs = v[sl]
        if vs.size == 0:
            return ()
        if np.unique(vs).size < 2:
            return None
        b5, b6 = nnls(np.column_stack([x[sl], x[sl] * vs]), diff[sl])
        return float(b5), float(b6)

    def flat(sl):
        xs = x[sl]
        if xs.size == 0:
            return np.inf
        return float(max(0.0, np.dot(xs, diff[sl]) / np.dot(xs, xs)))

    def predict(lin, b4):
        g_lin = lin[0] + lin[1] * v if lin else np.inf
        return x * np.minimum(g_lin, b4)

    sse, lin, b4 = _profile_min(_speed_boundaries(v), diff, rising, flat, predict)
    if lin and np.isfinite(b4):
        use_flat = b4 <= lin[0] + lin[1] * v
        if use_flat.any() and np.unique(v[~use_flat]).size >= 2:
            xs = x[use_flat]
            b4_r = float(max(0.0, np.dot(xs, diff[use_flat]) / np.dot(xs, xs)))
            b5_r, b6_r = nnls(np.column_stack([x[~use_flat], x[~use_flat] * v[~use_flat]]),
                              diff[~use_flat])
            sse_r = float(np.sum((predict((b5_r, b6_r), b4_r) - diff) ** 2))
            if sse_r < sse:
                sse, lin, b4 = sse_r, (float(b5_r), float(b6_r)), b4_r
    if not lin:
        lin = (b4, 0.0)
    if not np.isfinite(b4):
        # Rising regime everywhere: cap where the data end.
        b4 = lin[0] + lin[1] * float(v.max())
    return (float(b4), float(lin[0]), float(lin[1])), sse


def fit_feasible_region(oracle, tol=BISECT_TOL):
    """Fit ``b1..b6`` of the acceleration limit to an oracle's feasibility flag.

    Returns
    -------
    (dict, FitReport)
    """
    report = FitReport()

    v = np.linspace(*LIMIT_SPEED_RANGE, N_LIMIT_SPEED)
    amax = _acceleration_limits(oracle, v, np.zeros_like(v), tol, "feasible_step1")
    ok = np.isfinite(amax)
    if ok.sum() < 3:
        raise FitError("too few bracketed acceleration limits", step="feasible_step1")
    (b1, b2, b3), sse = _fit_speed_limit(v[ok], amax[ok])
    report.region_steps.append(StepReport("feasible_step1", (N_LIMIT_SPEED,),
                                   {"b1": b1, "b2": b2, "b3": b3},
                                   float(np.sqrt(sse / ok.sum())), n_used=int(ok.sum()),
                                   n_unbracketed=int((~ok).sum())))

    vg = np.linspace(0.0, MAX_SPEED, N_GRADE_SPEED)
    # Mirror the positive half so opposite grades are exact negatives.
    half = np.linspace(*GRADE_RANGE, N_GRADE)[N_GRADE // 2:]
    theta = np.concatenate([-half[::-1], half])
    V, TH = np.meshgrid(vg, theta, indexing="ij")
    limits = _acceleration_limits(oracle, V.ravel(), TH.ravel(), tol,
                                  "feasible_step2").reshape(V.shape)
    n_half = half.size
    uphill = limits[:, n_half:]
    downhill = limits[:, :n_half][:, ::-1]
    diff = downhill - uphill
    Vd = np.broadcast_to(vg[:, None], diff.shape)
    THd = np.broadcast_to(half[None, :], diff.shape)
    ok2 = np.isfinite(diff)
    if ok2.sum() < 3:
        raise FitError("too few bracketed grade pairs", step="feasible_step2")
    (b4, b5, b6), sse2 = _fit_grade_slope(Vd[ok2], THd[ok2], diff[ok2])
    report.region_steps.append(StepReport("feasible_step2", (N_GRADE_SPEED, N_GRADE),
                                   {"b4": b4, "b5": b5, "b6": b6},
                                   float(np.sqrt(sse2 / ok2.sum())), n_used=int(ok2.sum()),
                                   n_unbracketed=int((~ok2).sum())))
    return {"b1": b1, "b2": b2, "b3": b3, "b4": b4, "b5": b5, "b6": b6}, report


def fit(oracle, name="fitted vehicle", duty=None, tol=BISECT_TOL):
    """Run both fits and assemble a :class:`SimplifiedParams`."""
    cached = _as_cached(oracle)
    fuel, report = fit_simplified(cached, duty=duty, tol=tol)
    try:
        region, region_report = fit_feasible_region(cached, tol=tol)
    except FitError as exc:
        error = FitError(f"fit_feasible_region failed at {exc}")
        error.step = exc.step
        raise error from exc
    report.region_steps = region_report.region_steps
    params = SimplifiedParams(name=name, duty=report.duty, **fuel, **region)
    return params, report

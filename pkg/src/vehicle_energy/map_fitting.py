"""Steady-state test schedules, empirical map fitting and constant extraction.

The test schedule (a virtual chassis dynamometer run) holds each gear at a
ladder of constant speeds and, at each speed, steps the pedal from 0 to 1.
Any black-box vehicle simulator that answers ``oracle(gear, v, pedal)`` with
the steady-state operating point can be driven by :func:`run_vcd`. The
captured samples feed the least-squares fits of the fuel map and the
per-gear engine speed and torque maps. Drive-cycle traces feed
:func:`extract_empirical_constants`.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, FitError, InputError, ParseError
from .numerics import nearest_rank_percentile, time_derivative, uniform_step
from .semi_principled.maps import LinearForm, TensorPoly, TwoFacetSurface
from .semi_principled.vehicle import (
    FUEL_DEGREES,
    OPEN_SPEED_DEGREES,
    EmpiricalConstants,
    EmpiricalMaps,
)
from .tabular import atomic_write_text, parse_bool, parse_float, parse_gear, read_rows

logger = logging.getLogger(__name__)

SPEED_STEP = 0.1  # m/s
PEDAL_STEPS = 50  # pedal 0, 0.02, ..., 1
DWELL_S = 10.0
CAPTURE_AT_S = 8.0
SCHEDULE_SPEED_CAP = 34.0  # m/s
PIECEWISE_MAX_ITER = 50

IDLE_SPEED = 0.1  # m/s
IDLE_TORQUE_RATE = 0.01  # Nm/s
IDLE_WINDOW_S = 1.0
CUT_FUEL = 0.05  # g/s
CUT_MIN_SPEED = 1.0  # m/s
CUT_SPEED_PERCENTILE = 1
CUT_FORCE_PERCENTILE = 95
LOW_ACCEL = 1.0  # m/s^2
HIGH_ACCEL = 2.0  # m/s^2
CORRECTION_SAMPLES = 3


# -- schedule ----------------------------------------------------------------------

@dataclass(frozen=True)
class VcdEntry:
    gear: int
    target_speed: float  # m/s
    pedal: float  # fraction of full pedal
    dwell_s: float = DWELL_S
    capture_at_s: float = CAPTURE_AT_S


@dataclass(frozen=True)
class VcdSchedule:
    entries: tuple
    bounds: dict  # gear -> (v_min, v_max)

    def __len__(self):
        return len(self.entries)

    def for_gear(self, gear):
        return [e for e in self.entries if e.gear == gear]


def pedal_sequence():
    return tuple(i / PEDAL_STEPS for i in range(PEDAL_STEPS + 1))


def gear_speed_bounds(constants, gear):
    ratio = constants.g_r[gear - 1] * constants.d_r
    v_min = max(constants.N_min * constants.r_tire / ratio, 0.0)
    v_max = min(constants.N_max * constants.r_tire / ratio, SCHEDULE_SPEED_CAP)
    return v_min, v_max


def generate_vcd_schedule(constants, gears=None):
    """Gear-by-gear schedule, speed-major then pedal, for gears ``1..gears``."""
    n = constants.n_gears if gears is None else int(gears)
    if not 1 <= n <= constants.n_gears:
        raise ConfigurationError(f"gear count {gears} outside 1..{constants.n_gears}")
    pedals = pedal_sequence()
    entries, bounds = [], {}
    for gear in range(1, n + 1):
        v_min, v_max = gear_speed_bounds(constants, gear)
        bounds[gear] = (v_min, v_max)
        if v_min > v_max:
            logger.warning("gear %d: minimum speed %.3f exceeds maximum %.3f; no test points",
                           gear, v_min, v_max)
            continue
        count = math.floor((v_max - v_min) / SPEED_STEP + 1e-9) + 1
        for i in range(count):
            speed = v_min + i * SPEED_STEP
            entries.extend(VcdEntry(gear, speed, p) for p in pedals)
    return VcdSchedule(tuple(entries), bounds)


# -- samples -------------------------------------------------------------------------

SAMPLE_FIELDS = ("gear", "v", "pedal", "N", "T", "fuel", "N_output", "F_wheel", "tc_locked")


@dataclass(frozen=True)
class VcdSample:
    gear: int
    v: float
    pedal: float
    N: float
    T: float
    fuel: float
    N_output: float
    F_wheel: float
    tc_locked: bool

    def __post_init__(self):
        if int(self.gear) < 1:
            raise InputError(f"gear must be >= 1, got {self.gear}")
        values = (self.v, self.pedal, self.N, self.T, self.fuel, self.N_output, self.F_wheel)
        if not all(math.isfinite(float(x)) for x in values):
            raise InputError("non-finite VCD sample")


def run_vcd(schedule, oracle):
    """Drive ``oracle(gear, v, pedal)`` through the schedule and collect the samples.

    The oracle returns a mapping with keys ``N``, ``T``, ``fuel``,
    ``N_output``, ``F_wheel`` and ``tc_locked``, read ``capture_at_s`` after
    the step is applied.
    """
    samples = []
    for e in schedule.entries:
        out = oracle(e.gear, e.target_speed, e.pedal)
        samples.append(VcdSample(e.gear, e.target_speed, e.pedal, out["N"], out["T"], out["fuel"],
                                 out["N_output"], out["F_wheel"], bool(out["tc_locked"])))
    return samples


class SteadyStateMapOracle:
    """Test-bench oracle answering from a vehicle's own fitted maps.

    The pedal commands a fraction of the gear's maximum wheel torque; engine
    speed, torque and fuel come straight from the maps without any clamping,
    so the samples lie exactly in the fitted model classes.
    """

    def __init__(self, vehicle):
        self.vehicle = vehicle

    def __call__(self, gear, v, pedal):
        veh = self.vehicle
        c = veh.constants
        F = pedal * float(veh.pmaps.T_wmax_of_v_k(v, gear)) / c.r_tire
        n_out = c.d_r * v / c.r_tire
        N = float(veh.emaps.engine_speed[gear - 1](n_out, F))
        T = float(veh.emaps.engine_torque[gear - 1](n_out, F))
        return {"N": N, "T": T, "fuel": float(veh.emaps.fuel_poly(N, T)), "N_output": n_out,
                "F_wheel": F, "tc_locked": gear > 1}


def read_vcd_samples(path):
    samples = []
    for index, row in read_rows(path, SAMPLE_FIELDS)[1]:
        nums = [parse_float(x, index) for x in row[1:8]]
        samples.append(VcdSample(parse_gear(row[0], index), *nums,
                                 parse_bool(row[8], index)))
    return samples


def write_vcd_samples(samples, path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SAMPLE_FIELDS)
    for s in samples:
        w.writerow([s.gear, repr(float(s.v)), repr(float(s.pedal)), repr(float(s.N)),
                    repr(float(s.T)), repr(float(s.fuel)), repr(float(s.N_output)),
                    repr(float(s.F_wheel)), int(s.tc_locked)])
    atomic_write_text(path, buf.getvalue())


def write_vcd_schedule(schedule, path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("gear", "target_speed", "pedal", "dwell_s", "capture_at_s"))
    for e in schedule.entries:
        w.writerow([e.gear, f"{e.target_speed:.10g}", f"{e.pedal:.10g}", f"{e.dwell_s:g}",
                    f"{e.capture_at_s:g}"])
    atomic_write_text(path, buf.getvalue())


# -- least squares ---------------------------------------------------------------------

@dataclass(frozen=True)
class MapFit:
    """A fitted map with its root-mean-square residual and sample count."""

    map: object
    rms: float
    n_samples: int
    converged: bool = True


def _normalizer(x):
    lo, hi = float(np.min(x)), float(np.max(x))
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return center, (half if half > 0 else 1.0)


def _change_of_variable(degree, center, half):
    """``M[i, j]``: coefficient of ``x**j`` in ``((x - center) / half)**i``."""
    M = np.zeros((degree + 1, degree + 1))
    for i in range(degree + 1):
        for j in range(i + 1):
            M[i, j] = math.comb(i, j) * (-center) ** (i - j) / half**i
    return M


def _solve(design, target, labels):
    """Ordinary least squares with a rank check on the column-normalized design."""
    if design.shape[0] < design.shape[1]:
        raise FitError(f"{design.shape[0]} samples for {design.shape[1]} coefficients")
    norms = np.linalg.norm(design, axis=0)
    if np.any(norms == 0):
        dead = [labels[i] for i in np.flatnonzero(norms == 0)]
        raise FitError(f"rank-deficient design; no variation in {dead}")
    scaled = design / norms
    _, s, vt = np.linalg.svd(scaled, full_matrices=False)
    tol = s[0] * max(scaled.shape) * np.finfo(float).eps * 1e3
    if s[-1] <= tol:
        null = vt[-1]
        names = [labels[i] for i in np.argsort(-np.abs(null))[:3]]
        raise FitError(f"rank-deficient design; dependent directions involve {names}")
    coef = np.linalg.lstsq(scaled, target, rcond=None)[0] / norms
    return coef


def fit_tensor_poly(x, y, z, degrees):
    """Least squares over ``{x**i y**j : i <= dx, j <= dy}``; returns a :class:`MapFit`.

    Inputs are mapped to [-1, 1] for the solve and the coefficients are
    expanded back to raw monomials.
    """
    x, y, z = (np.asarray(q, dtype=float).ravel() for q in (x, y, z))
    dx, dy = degrees
    cx, hx = _normalizer(x)
    cy, hy = _normalizer(y)
    xs, ys = (x - cx) / hx, (y - cy) / hy
    columns, labels = [], []
    for i in range(dx + 1):
        for j in range(dy + 1):
            columns.append(xs**i * ys**j)
            labels.append(f"x^{i} y^{j}")
    design = np.column_stack(columns)
    scaled_coef = _solve(design, z, labels).reshape(dx + 1, dy + 1)
    raw = _change_of_variable(dx, cx, hx).T @ scaled_coef @ _change_of_variable(dy, cy, hy)
    poly = TensorPoly(raw)
    rms = float(np.sqrt(np.mean((design @ scaled_coef.ravel() - z) ** 2)))
    return MapFit(poly, rms, z.size)


def fit_linear(x, z, y=None):
    """Least-squares line in ``x`` or plane in ``(x, y)``."""
    x = np.asarray(x, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    cx, hx = _normalizer(x)
    cols, labels = [np.ones_like(x), (x - cx) / hx], ["1", "x"]
    if y is not None:
        y = np.asarray(y, dtype=float).ravel()
        cy, hy = _normalizer(y)
        cols.append((y - cy) / hy)
        labels.append("y")
    design = np.column_stack(cols)
    c = _solve(design, z, labels)
    rms = float(np.sqrt(np.mean((design @ c - z) ** 2)))
    raw = [c[0] - c[1] * cx / hx, c[1] / hx]
    if y is not None:
        raw[0] -= c[2] * cy / hy
        raw.append(c[2] / hy)
    return MapFit(LinearForm(tuple(raw)), rms, z.size)


def _columns(samples, gear=None):
    chosen = [s for s in samples if gear is None or s.gear == gear]
    if not chosen:
        raise FitError(f"no samples for gear {gear}")
    return {name: np.array([getattr(s, name) for s in chosen], dtype=float)
            for name in ("v", "N", "T", "fuel", "N_output", "F_wheel")}


def fit_fuel_map(samples):
    """Fuel rate as a polynomial of degree 2 in engine speed and 3 in torque."""
    d = _columns(samples)
    return fit_tensor_poly(d["N"], d["T"], d["fuel"], FUEL_DEGREES)


def fit_engine_speed_map(samples, gear):
    """Engine speed from (output speed, wheel force) for one gear.

    First gear (open torque converter) uses a cubic-by-quadratic
    polynomial; locked gears a line in output speed alone.
    """
    d = _columns(samples, gear)
    if gear == 1:
        return fit_tensor_poly(d["N_output"], d["F_wheel"], d["N"], OPEN_SPEED_DEGREES)
    return fit_linear(d["N_output"], d["N"])


# -- two-facet surface -----------------------------------------------------------------

def _hinge_design(xs, ys, phi, c):
    s = np.cos(phi) * xs + np.sin(phi) * ys - c
    return np.column_stack([np.ones_like(xs), xs, ys, np.maximum(s, 0.0)]), s


def _hinge_solve(xs, ys, z, phi, c):
    design, s = _hinge_design(xs, ys, phi, c)
    beta = np.linalg.lstsq(design, z, rcond=None)[0]
    resid = z - design @ beta
    return beta, float(resid @ resid), resid, s


def fit_two_facet(x, y, z, max_iter=PIECEWISE_MAX_ITER):
    """Continuous two-plane least-squares surface, started from the plane fit.

    The surface is parameterized as a plane plus a hinge,
    ``base(x, y) + k * max(0, s)`` with ``s`` the signed distance to the
    break line ``cos(phi) x' + sin(phi) y' = c`` in normalized coordinates.
    Each iteration solves the facets exactly for the current line, then
    moves the line by a damped Gauss-Newton step taken from the joint
    linearization in facets and line. A coarse scan over line angles and offsets seeds the
    iteration.
    If it has not settled after ``max_iter`` iterations the plane fit is
    returned instead, with ``converged=False`` and a warning.
    """
    x, y, z = (np.asarray(q, dtype=float).ravel() for q in (x, y, z))
    plane = fit_linear(x, z, y)
    base_plane = plane.map
    cx, hx = _normalizer(x)
    cy, hy = _normalizer(y)
    xs, ys = (x - cx) / hx, (y - cy) / hy

    best = None
    for phi in np.linspace(0.0, np.pi, 24, endpoint=False):
        s = np.cos(phi) * xs + np.sin(phi) * ys
        for c in np.quantile(s, np.linspace(0.05, 0.95, 19)):
            beta, rss, _, _ = _hinge_solve(xs, ys, z, phi, c)
            if best is None or rss < best[0]:
                best = (rss, phi, c)
    rss, phi, c = best
    scale = max(float(z @ z), 1e-300)

    converged = False
    for _ in range(max_iter):
        beta, rss, resid, s = _hinge_solve(xs, ys, z, phi, c)
        if rss <= 1e-28 * scale:
            converged = True
            break
        active = (s > 0).astype(float)
        line_jac = np.column_stack([beta[3] * active * (-np.sin(phi) * xs + np.cos(phi) * ys),
                                    -beta[3] * active])
        if not np.any(line_jac):
            converged = True
            break
        # Joint linearization in facets and line; only the line part of the
        # step is kept, the facets are re-solved exactly at the new line.
        J = np.column_stack([_hinge_design(xs, ys, phi, c)[0], line_jac])
        step = np.linalg.lstsq(J, resid, rcond=None)[0][4:]
        t = 1.0
        improved = False
        while t > 1e-10:
            cand = (phi + t * step[0], c + t * step[1])
            cand_rss = _hinge_solve(xs, ys, z, *cand)[1]
            if cand_rss < rss:
                improved = True
                break
            t *= 0.5
        if not improved:
            converged = True
            break
        phi, c = cand
        if rss - cand_rss <= 1e-13 * rss and np.max(np.abs(t * step)) < 1e-10:
            beta, rss = _hinge_solve(xs, ys, z, phi, c)[:2]
            converged = True
            break
    else:
        logger.warning("two-facet fit did not settle in %d iterations; using the plane fit",
                       max_iter)
        return MapFit(TwoFacetSurface.plane(base_plane.coef), plane.rms, plane.n_samples, False)

    beta, rss = _hinge_solve(xs, ys, z, phi, c)[:2]
    b0, bx, by, k = beta
    base = (b0 - bx * cx / hx - by * cy / hy, bx / hx, by / hy)
    normal = (np.cos(phi) / hx, np.sin(phi) / hy)
    offset = c + np.cos(phi) * cx / hx + np.sin(phi) * cy / hy
    surface = TwoFacetSurface.hinge(base, k, normal, offset)
    rms = math.sqrt(rss / z.size)
    if rms > plane.rms:  # never worse than the starting plane
        return MapFit(TwoFacetSurface.plane(base_plane.coef), plane.rms, plane.n_samples, converged)
    return MapFit(surface, rms, z.size, converged)


def fit_engine_torque_map(samples, gear, max_iter=PIECEWISE_MAX_ITER):
    """Engine torque from (output speed, wheel force) for one gear.

    First gear uses a continuous two-facet piecewise-linear surface; locked
    gears a plane.
    """
    d = _columns(samples, gear)
    if gear == 1:
        return fit_two_facet(d["N_output"], d["F_wheel"], d["T"], max_iter)
    return fit_linear(d["N_output"], d["T"], d["F_wheel"])


@dataclass(frozen=True)
class MapFitReport:
    fuel: MapFit
    speed: tuple
    torque: tuple

    def to_dict(self):
        return {"fuel_rms": self.fuel.rms, "n_samples": self.fuel.n_samples,
                "engine_speed_rms": {str(k + 1): f.rms for k, f in enumerate(self.speed)},
                "engine_torque_rms": {str(k + 1): f.rms for k, f in enumerate(self.torque)},
                "first_gear_torque_converged": self.torque[0].converged}


def fit_empirical_maps(samples, n_gears=None):
    """Fit every empirical map; returns ``(EmpiricalMaps, MapFitReport)``."""
    gears = sorted({s.gear for s in samples})
    n = n_gears or max(gears)
    missing = sorted(set(range(1, n + 1)) - set(gears))
    if missing:
        raise FitError(f"no samples for gears {missing}")
    fuel = fit_fuel_map(samples)
    speed = tuple(fit_engine_speed_map(samples, k) for k in range(1, n + 1))
    torque = tuple(fit_engine_torque_map(samples, k) for k in range(1, n + 1))
    maps = EmpiricalMaps(fuel.map, tuple(f.map for f in speed), tuple(f.map for f in torque))
    return maps, MapFitReport(fuel, speed, torque)


# -- drive traces and empirical constants ------------------------------------------------

class TcState(str, enum.Enum):
    """Torque-converter state recorded in a drive trace."""

    LOCKED = "locked"
    OPEN_STEADY = "open_steady"
    OPEN_TRANSIENT = "open_transient"


TRACE_FIELDS = ("t", "v", "gear", "N", "T", "fuel", "F_wheel", "tc_state")


@dataclass(frozen=True, eq=False)
class DriveTrace:
    """Uniformly sampled recording of a detailed simulation on a drive cycle."""

    t: np.ndarray
    v: np.ndarray
    gear: np.ndarray
    N: np.ndarray
    T: np.ndarray
    fuel: np.ndarray
    F_wheel: np.ndarray
    tc_state: tuple

    def __post_init__(self):
        n = len(self.t)
        for name in ("t", "v", "N", "T", "fuel", "F_wheel"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise InputError(f"trace channel {name} has length {arr.size}, expected {n}")
            if not np.all(np.isfinite(arr)):
                raise InputError(f"trace channel {name} has non-finite values")
            object.__setattr__(self, name, arr)
        gear = np.asarray(self.gear)
        if gear.shape != (n,) or not np.all(gear == np.round(gear)):
            raise InputError("trace gear channel must hold integers")
        object.__setattr__(self, "gear", gear.astype(np.int64))
        states = tuple(TcState(s) for s in self.tc_state)
        if len(states) != n:
            raise InputError("trace tc_state channel has the wrong length")
        object.__setattr__(self, "tc_state", states)
        if n >= 2:
            if not np.all(np.diff(self.t) > 0):
                raise InputError("trace time must be strictly increasing")
            uniform_step(self.t)

    def __len__(self):
        return len(self.t)


def read_drive_trace(path):
    cols = {name: [] for name in TRACE_FIELDS}
    for index, row in read_rows(path, TRACE_FIELDS)[1]:
        for name, text in zip(TRACE_FIELDS, row):
            if name == "gear":
                cols[name].append(parse_gear(text, index))
            elif name == "tc_state":
                try:
                    cols[name].append(TcState(text))
                except ValueError:
                    raise ParseError(f"unknown torque-converter state {text!r}", index) from None
            else:
                cols[name].append(parse_float(text, index))
        if len(cols["t"]) > 1 and cols["t"][-1] <= cols["t"][-2]:
            raise ParseError("time must be strictly increasing", index)
    try:
        return DriveTrace(**cols)
    except InputError as exc:
        raise ParseError(str(exc)) from None


def write_drive_trace(trace, path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for i in range(len(trace)):
        w.writerow([repr(float(trace.t[i])), repr(float(trace.v[i])), int(trace.gear[i]),
                    repr(float(trace.N[i])), repr(float(trace.T[i])), repr(float(trace.fuel[i])),
                    repr(float(trace.F_wheel[i])), trace.tc_state[i].value])
    atomic_write_text(path, buf.getvalue())


@dataclass(frozen=True)
class DownshiftEvent:
    from_gear: int
    speed: float  # m/s


def detect_downshifts(trace):
    """Samples where the gear drops by exactly one while the wheel force is negative."""
    g = trace.gear
    hits = np.flatnonzero((g[1:] == g[:-1] - 1) & (trace.F_wheel[1:] < 0)) + 1
    return [DownshiftEvent(int(g[i - 1]), float(trace.v[i])) for i in hits]


@dataclass
class ExtractedConstants:
    """Empirical constants recovered from a trace; ``None`` marks an absent field."""

    T_min: float | None = None
    f_idle: float | None = None
    v_c: float | None = None
    F_wc: float | None = None
    downshift_speeds: dict = field(default_factory=dict)  # from-gear -> median speed
    torque_correction_slope: float | None = None
    diagnostics: list = field(default_factory=list)

    def to_empirical_constants(self, n_gears):
        missing = [name for name in ("T_min", "f_idle", "v_c", "F_wc", "torque_correction_slope")
                   if getattr(self, name) is None]
        gears = list(range(2, n_gears + 1))
        missing += [f"downshift {k}->{k - 1}" for k in gears if k not in self.downshift_speeds]
        if missing:
            raise ConfigurationError(f"incomplete empirical constants: {missing}")
        return EmpiricalConstants(self.T_min, self.f_idle, self.v_c, self.F_wc,
                                  tuple(self.downshift_speeds[k] for k in gears),
                                  self.torque_correction_slope)

    def to_dict(self):
        return {"T_min": self.T_min, "f_idle": self.f_idle, "v_c": self.v_c, "F_wc": self.F_wc,
                "downshift_speeds": {str(k): v for k, v in sorted(self.downshift_speeds.items())},
                "torque_correction_slope": self.torque_correction_slope,
                "torque_correction_intercept": 0.0,
                "diagnostics": list(self.diagnostics)}


def _steady_torque_mask(trace):
    """Samples whose torque rate stays below the idle threshold within +-1 s."""
    if len(trace) < 2:
        return np.zeros(len(trace), dtype=bool)
    rate = np.abs(time_derivative(trace.t, trace.T))
    step = uniform_step(trace.t)
    half = math.floor(IDLE_WINDOW_S / step + 1e-9)
    padded = np.pad(rate, half, constant_values=np.inf)
    window = np.lib.stride_tricks.sliding_window_view(padded, 2 * half + 1)
    # Windows that run off the ends of the trace only cover the recorded part.
    worst = np.array([np.max(w[np.isfinite(w)]) for w in window])
    return worst < IDLE_TORQUE_RATE


def _region_mean(a, err, mask):
    """Mean (a, err) over the three samples nearest the region's mean acceleration."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return None
    centroid = a[idx].mean()
    nearest = idx[np.argsort(np.abs(a[idx] - centroid), kind="stable")[:CORRECTION_SAMPLES]]
    return float(a[nearest].mean()), float(err[nearest].mean())


def extract_empirical_constants(trace, constants=None, torque_map=None, downshift_events=None):
    """Tune the empirical constants from a drive trace.

    ``constants`` (principled constants) and ``torque_map`` (the first-gear
    engine torque map) are needed only for the torque correction, which
    compares recorded first-gear torque with the map. Pre-detected downshift
    events may be passed; otherwise they are detected in the trace.
    """
    out = ExtractedConstants()

    idle = (trace.v < IDLE_SPEED) & _steady_torque_mask(trace)
    if idle.any():
        out.T_min = float(np.median(trace.T[idle]))
        out.f_idle = statistics.fmean(trace.fuel[idle].tolist())  # exactly summed
    else:
        out.diagnostics.append("no idle samples (v < 0.1 m/s with steady torque)")

    cut = (trace.fuel < CUT_FUEL) & (trace.v > CUT_MIN_SPEED)
    if cut.any():
        out.v_c = nearest_rank_percentile(trace.v[cut], CUT_SPEED_PERCENTILE)
        out.F_wc = nearest_rank_percentile(trace.F_wheel[cut], CUT_FORCE_PERCENTILE)
    else:
        out.diagnostics.append("no fuel-cut samples (fuel < 0.05 g/s above 1 m/s)")

    events = detect_downshifts(trace) if downshift_events is None else list(downshift_events)
    by_gear = {}
    for ev in events:
        by_gear.setdefault(int(ev.from_gear), []).append(float(ev.speed))
    out.downshift_speeds = {k: float(np.median(v)) for k, v in sorted(by_gear.items())}
    if not events:
        out.diagnostics.append("no braking downshift events")

    if constants is None or torque_map is None:
        out.diagnostics.append("torque correction skipped: needs principled constants and "
                               "the first-gear torque map")
        return out
    a = time_derivative(trace.t, trace.v) if len(trace) >= 2 else np.zeros(len(trace))
    n_out = constants.d_r * trace.v / constants.r_tire
    err = trace.T - torque_map(n_out, trace.F_wheel)
    qualifying = (trace.gear == 1) & np.array([s is TcState.OPEN_STEADY for s in trace.tc_state],
                                              dtype=bool)
    low = _region_mean(a, err, qualifying & (a < LOW_ACCEL))
    high = _region_mean(a, err, qualifying & (a > HIGH_ACCEL))
    if low is None or high is None:
        out.diagnostics.append("torque correction: a low- or high-acceleration region is empty")
        return out
    pts = np.array([low, high])
    denom = float(pts[:, 0] @ pts[:, 0])
    if denom == 0:
        out.diagnostics.append("torque correction: region accelerations are zero")
        return out
    out.torque_correction_slope = float(pts[:, 0] @ pts[:, 1]) / denom
    return out

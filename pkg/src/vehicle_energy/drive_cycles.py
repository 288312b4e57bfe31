"""Drive-cycle ingestion, trip fuel integration and validation tables.

Any fuel model following the oracle convention
``model(v, a, theta) -> (fuel_rate, feasible)`` on arrays can be driven over
a cycle; :class:`~vehicle_energy.simplified.SimplifiedModel`,
:class:`~vehicle_energy.semi_principled.SemiPrincipledModel` and the
grid-dump models all qualify. Scalar callables taking an
:class:`~vehicle_energy.simplified.OperatingPoint` can be adapted with
:func:`operating_point_model`.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InputError, ParseError
from .numerics import time_derivative, uniform_step
from .simplified import Duty, OperatingPoint
from .tabular import atomic_write_text, csv_text, parse_float, read_rows

logger = logging.getLogger(__name__)

MPH = 1609.344 / 3600.0  # m/s per mi/h
TRACKING_TOLERANCE = 2.0 * MPH  # 0.89408 m/s
MAX_UNTRACKED_FRACTION = 0.25
GRADE_LIMITS = {Duty.LIGHT: 0.03, Duty.MEDIUM_HEAVY: 0.02}  # rad
STANDARD_GRADES = (-0.03, -0.02, -0.01, 0.0, 0.01, 0.02, 0.03)
PLOT_WINDOW_S = 20.0

VALIDATION_FIELDS = ("vehicle", "model", "cycle", "grade", "rel_error_pct", "realizable")


@dataclass(frozen=True, eq=False)
class DriveCycle:
    """Speed profile with road grade; arrays are read-only after construction."""

    name: str
    t: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    source: str = ""

    def __post_init__(self):
        arrays = []
        for label in ("t", "v", "theta"):
            arr = np.array(getattr(self, label), dtype=float).ravel()
            if not np.all(np.isfinite(arr)):
                raise InputError(f"cycle {self.name!r}: non-finite {label}")
            arr.setflags(write=False)
            arrays.append(arr)
        t, v, theta = arrays
        if not (t.size == v.size == theta.size) or t.size == 0:
            raise InputError(f"cycle {self.name!r}: t, v and theta must be non-empty and aligned")
        if np.any(np.diff(t) <= 0):
            raise InputError(f"cycle {self.name!r}: time must be strictly increasing")
        if np.any(v < 0):
            raise InputError(f"cycle {self.name!r}: negative speed")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "source", self.source or self.name.upper())

    def __len__(self):
        return self.t.size

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0])

    def equals(self, other):
        return (self.name == other.name and np.array_equal(self.t, other.t)
                and np.array_equal(self.v, other.v) and np.array_equal(self.theta, other.theta))


def load_cycle(path, name=None):
    """Read a ``t,v[,theta]`` CSV; a missing theta column loads as zeros."""
    path = Path(path)
    columns, rows = read_rows(path, ("t", "v"), optional=("theta",))
    t, v, theta = [], [], []
    for index, fields in rows:
        ti, vi = parse_float(fields[0], index), parse_float(fields[1], index)
        if t and ti <= t[-1]:
            raise ParseError(f"time {fields[0]} does not increase", index)
        if vi < 0:
            raise ParseError(f"negative speed {fields[1]}", index)
        t.append(ti)
        v.append(vi)
        theta.append(parse_float(fields[2], index) if len(columns) == 3 else 0.0)
    if not t:
        raise ParseError("cycle has no samples", 0)
    return DriveCycle(name or path.stem, t, v, theta)


def bundled_cycles():
    root = resources.files("vehicle_energy") / "data" / "cycles"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".csv"))


def load_bundled_cycle(name):
    key = name.lower()
    root = resources.files("vehicle_energy") / "data" / "cycles"
    resource = root / f"{key}.csv"
    if not resource.is_file():
        raise ConfigurationError(f"no bundled cycle {name!r}; available: {bundled_cycles()}")
    with resources.as_file(resource) as path:
        return load_cycle(path, key)


def resolve_cycle(source):
    """A bundled cycle name or a path to a cycle CSV."""
    if Path(source).is_file():
        return load_cycle(source)
    if source.lower() in bundled_cycles():
        return load_bundled_cycle(source)
    raise ConfigurationError(f"cycle {source!r} is neither a file nor a bundled cycle "
                             f"({', '.join(bundled_cycles())})")


def with_constant_grade(cycle, theta, duty=Duty.LIGHT):
    """Same speed trace with every grade sample set to ``theta``.

    Grades beyond the validated range (0.03 rad light duty, 0.02 rad medium
    and heavy duty) are still applied, with a warning.
    """
    theta = float(theta)
    if not math.isfinite(theta):
        raise InputError("grade must be finite")
    limit = GRADE_LIMITS[Duty(duty)]
    if abs(theta) > limit + 1e-12:
        logger.warning("grade %.4g rad exceeds the %s range of +-%.2g rad", theta,
                       Duty(duty).value, limit)
    return DriveCycle(cycle.name, cycle.t, cycle.v, np.full(len(cycle), theta), cycle.source)


def derive_acceleration(cycle):
    """Central differences inside the cycle, one-sided at the two ends."""
    if len(cycle) < 2:
        raise InputError("acceleration needs at least two samples")
    return time_derivative(cycle.t, cycle.v)


def operating_point_model(func):
    """Adapt ``func(OperatingPoint) -> fuel`` or ``-> (fuel, feasible)`` to the oracle form."""

    def model(v, a, theta):
        fuel = np.empty(len(v))
        ok = np.ones(len(v), dtype=bool)
        for i, pt in enumerate(map(OperatingPoint, v, a, theta)):
            out = func(pt)
            if isinstance(out, tuple):
                fuel[i], ok[i] = out
            else:
                fuel[i] = out
        return fuel, ok

    return model


def constant_rate_model(rate):
    """Model burning ``rate`` g/s everywhere, always feasible."""

    def model(v, a, theta):
        v = np.asarray(v, dtype=float)
        return np.full(v.shape, float(rate)), np.ones(v.shape, dtype=bool)

    return model


@dataclass(frozen=True, eq=False)
class TripFuel:
    total: float  # g
    t: np.ndarray
    fuel_rate: np.ndarray  # g/s per sample
    feasible: np.ndarray

    @property
    def n_infeasible(self):
        return int(np.count_nonzero(~self.feasible))


def trapezoid(t, y):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def integrate_fuel(model, cycle):
    """Trip fuel (g) by the trapezoidal rule over the per-sample fuel rates."""
    a = derive_acceleration(cycle) if len(cycle) >= 2 else np.zeros(1)
    fuel, feasible = model(cycle.v, a, cycle.theta)
    fuel = np.broadcast_to(np.asarray(fuel, dtype=float), cycle.t.shape).copy()
    feasible = np.broadcast_to(np.asarray(feasible, dtype=bool), cycle.t.shape).copy()
    result = TripFuel(trapezoid(cycle.t, fuel), cycle.t, fuel, feasible)
    if result.n_infeasible:
        logger.info("cycle %s: %d of %d samples outside the feasible region", cycle.name,
                    result.n_infeasible, len(cycle))
    return result


@dataclass(frozen=True)
class Realizability:
    realizable: bool
    violation_fraction: float


def realizability(cycle, achieved_v):
    """Share of samples tracked worse than 2 mi/h; realizable when it is at most 25 %."""
    target = cycle.v if isinstance(cycle, DriveCycle) else np.asarray(cycle, dtype=float)
    achieved = np.asarray(achieved_v, dtype=float).ravel()
    if achieved.shape != target.shape:
        raise InputError(f"achieved trace has {achieved.size} samples, cycle has {target.size}")
    misses = np.count_nonzero(np.abs(target - achieved) >= TRACKING_TOLERANCE)
    fraction = misses / target.size
    return Realizability(fraction <= MAX_UNTRACKED_FRACTION, fraction)


def moving_average(series, window_s=PLOT_WINDOW_S, t=None):
    """Centered moving mean over ``window_s`` seconds, truncated at the ends.

    The window spans ``round(window_s / (2 dt))`` samples on each side of
    the center (21 samples for 20 s at 1 Hz). Near the ends only the samples
    that exist are averaged, so the output has the input's length.
    """
    y = np.asarray(series, dtype=float).ravel()
    step = 1.0 if t is None else uniform_step(t)
    if y.size == 0:
        return y.copy()
    half = round(window_s / (2.0 * step))
    csum = np.concatenate(([0.0], np.cumsum(y)))
    idx = np.arange(y.size)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, y.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def relative_error_pct(model_total, reference_total):
    """``(model - reference) / reference * 100``; NaN when the reference is not positive."""
    if reference_total > 0:
        return (model_total - reference_total) / reference_total * 100.0
    return math.nan


@dataclass(frozen=True)
class ValidationRow:
    vehicle: str
    model: str
    cycle: str
    grade: float
    model_total: float
    reference_total: float
    rel_error_pct: float
    realizable: bool

    def csv_fields(self):
        err = "nan" if math.isnan(self.rel_error_pct) else f"{self.rel_error_pct:.6f}"
        return [self.vehicle, self.model, self.cycle, f"{self.grade:g}", err,
                int(self.realizable)]


@dataclass(frozen=True, eq=False)
class ReferenceTrace:
    """Externally recorded reference run: fuel rate and achieved speed per cycle sample."""

    fuel_rate: np.ndarray
    achieved_v: np.ndarray


@dataclass
class ValidationRun:
    rows: list
    traces: dict  # (cycle, grade) -> {label: per-sample fuel rate}; "t" holds time


def validate(models, reference, cycles, grades=(0.0,), vehicle="", duty=Duty.LIGHT):
    """Compare each model's trip fuel with a reference on every cycle and grade.

    ``models`` maps labels to oracles. ``reference`` is either an oracle or
    a mapping ``(cycle_name, grade) -> ReferenceTrace``. With an oracle
    reference the target speed is taken as achieved, so every row is
    realizable; recorded traces supply their own achieved speed.
    """
    rows, traces = [], {}
    for cycle in cycles:
        for grade in grades:
            graded = with_constant_grade(cycle, grade, duty)
            if callable(reference):
                ref = integrate_fuel(reference, graded)
                ref_total, ref_rate = ref.total, ref.fuel_rate
                real = realizability(graded, graded.v)
            else:
                try:
                    rec = reference[(cycle.name, float(grade))]
                except KeyError:
                    raise ConfigurationError(
                        f"no reference trace for cycle {cycle.name} at grade {grade:g}") from None
                ref_rate = np.asarray(rec.fuel_rate, dtype=float)
                if ref_rate.shape != graded.t.shape:
                    raise InputError(f"reference trace for {cycle.name} is not aligned with the "
                                     "cycle samples")
                ref_total = trapezoid(graded.t, ref_rate)
                real = realizability(graded, rec.achieved_v)
            trace = {"t": graded.t, "reference": ref_rate}
            for label, model in models.items():
                trip = integrate_fuel(model, graded)
                trace[label] = trip.fuel_rate
                rows.append(ValidationRow(vehicle, label, cycle.name, float(grade), trip.total,
                                          ref_total, relative_error_pct(trip.total, ref_total),
                                          real.realizable))
            traces[(cycle.name, float(grade))] = trace
    return ValidationRun(rows, traces)


def validation_csv(rows):
    return csv_text(VALIDATION_FIELDS, [r.csv_fields() for r in rows])


def write_validation_report(rows, path):
    atomic_write_text(path, validation_csv(rows))


def _column_label(label):
    return re.sub(r"[^0-9A-Za-z_]+", "_", label).strip("_") or "model"


def plot_trace_csv(trace, window_s=PLOT_WINDOW_S):
    """``t,fuel_<label>,...`` with each fuel series moving-averaged."""
    t = trace["t"]
    labels = [k for k in trace if k != "t"]
    header = ["t"] + [f"fuel_{_column_label(k)}" for k in labels]
    smoothed = [moving_average(trace[k], window_s, t) for k in labels]
    rows = [[repr(float(t[i]))] + [repr(float(s[i])) for s in smoothed] for i in range(t.size)]
    return csv_text(header, rows)


def write_plot_trace(trace, path, window_s=PLOT_WINDOW_S):
    atomic_write_text(path, plot_trace_csv(trace, window_s))


def read_reference_trace(path, cycle):
    """Reference run in the drive-trace CSV layout, aligned sample-for-sample with ``cycle``."""
    from .map_fitting import read_drive_trace

    rec = read_drive_trace(path)
    if len(rec) != len(cycle) or not np.allclose(rec.t, cycle.t, rtol=0, atol=1e-9):
        raise InputError(f"reference trace {path} is not sampled on the {cycle.name} time grid")
    return ReferenceTrace(rec.fuel, rec.v)

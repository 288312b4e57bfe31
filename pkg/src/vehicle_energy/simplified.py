"""Closed-form simplified fuel model and its feasible-region boundary.

The fuel rate is

    f_s(v, a, theta) = max(floor(v, a, theta), f_p(v, a, theta))

with the polynomial part

    f_p = C(v) + P(v) a_+ + Q(v) a_+**2 + Z(v) theta,    a_+ = max(a, a_min(v))

where ``C``, ``P``, ``Q`` and ``Z`` are low-order polynomials in speed and
``a_min(v) = -P(v) / (2 Q(v))`` is the vertex of the quadratic in
acceleration. Light-duty vehicles use the floor ``beta`` up to the fuel-cut
speed ``v_c`` and zero above it; above ``v_c`` they cut fuel entirely
(rate 0) when ``a`` falls below the boundary
``a_c(v, theta) = a0 + a1 v + a2 theta + a3 v**2 + a4 v theta``.
Medium- and heavy-duty vehicles never cut fuel and use the linear floor
``h0 + h1 v``. Rates are clamped at zero. The upper acceleration limit is

    a_max(v, theta) = min(b1, b2/v - b3 v**2) - min(b4, b5 + b6 v) theta.

Grade is taken as given (angle, sine and tangent are interchangeable for
grades up to about 0.06 rad) and never converted.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    InputError,
    SingularityError,
    UnsupportedOperationError,
)

logger = logging.getLogger(__name__)

# Conventional lower heating values, J/g.
SPECIFIC_ENERGY_GASOLINE = 43_500.0
SPECIFIC_ENERGY_DIESEL = 42_800.0

MAX_SPEED = 35.0  # m/s, upper end of the fitted speed domain


class Duty(str, enum.Enum):
    LIGHT = "LightDuty"
    MEDIUM_HEAVY = "MediumHeavyDuty"


class Feasibility(enum.IntEnum):
    FEASIBLE = 0
    INFEASIBLE = 1
    NEGATIVE_SPEED = 2


@dataclass(frozen=True)
class OperatingPoint:
    """Instantaneous speed (m/s), acceleration (m/s^2) and road grade (rad)."""

    v: float
    a: float
    theta: float = 0.0

    def check_finite(self):
        if not (math.isfinite(self.v) and math.isfinite(self.a) and math.isfinite(self.theta)):
            raise InputError(f"non-finite operating point {self}")


_COMMON = ("c0", "c1", "c2", "c3", "p0", "p1", "p2", "q0", "q1", "z0", "z1", "z2",
           "b1", "b2", "b3", "b4", "b5", "b6")
_LIGHT_ONLY = ("v_c", "beta", "a0", "a1", "a2", "a3", "a4")
_HEAVY_ONLY = ("h0", "h1")
# Key order of the parameter file, mirroring the table layout.
PARAM_KEYS = ("v_c", "a0", "a1", "a2", "a3", "a4", "beta", "h0", "h1") + _COMMON


@dataclass(frozen=True)
class SimplifiedParams:
    """Fitted parameters of one vehicle class.

    Light-duty sets carry ``v_c``, ``beta`` and the fuel-cut boundary
    coefficients ``a0..a4``; medium/heavy-duty sets carry ``h0``, ``h1``
    instead. Fields that do not apply to the duty class are ``None``.
    Construction validates every invariant and raises
    :class:`ConfigurationError` on violation.
    """

    name: str
    duty: Duty
    c0: float
    c1: float
    c2: float
    c3: float
    p0: float
    p1: float
    p2: float
    q0: float
    q1: float
    z0: float
    z1: float
    z2: float
    b1: float
    b2: float
    b3: float
    b4: float
    b5: float
    b6: float
    v_c: float | None = None
    beta: float | None = None
    a0: float | None = None
    a1: float | None = None
    a2: float | None = None
    a3: float | None = None
    a4: float | None = None
    h0: float | None = None
    h1: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "duty", Duty(self.duty))
        own, other = ((_LIGHT_ONLY, _HEAVY_ONLY) if self.duty is Duty.LIGHT
                      else (_HEAVY_ONLY, _LIGHT_ONLY))
        for key in _COMMON + own:
            value = getattr(self, key)
            if value is None:
                raise ConfigurationError(f"{self.name}: missing parameter {key!r}")
            value = float(value)
            if not math.isfinite(value):
                raise ConfigurationError(f"{self.name}: parameter {key!r} is not finite")
            object.__setattr__(self, key, value)
        for key in other:
            if getattr(self, key) is not None:
                raise ConfigurationError(
                    f"{self.name}: parameter {key!r} does not apply to {self.duty.value}")

        negative = [k for k in ("c0", "c1", "c2", "c3", "p0", "p1", "p2", "q0", "q1",
                                "z0", "z1", "z2") if getattr(self, k) < 0]
        if negative:
            raise ConfigurationError(f"{self.name}: coefficients must be >= 0: {negative}")
        if not (self.b1 > 0 and self.b2 > 0):
            raise ConfigurationError(f"{self.name}: b1 and b2 must be positive")
        if min(self.b3, self.b4, self.b5, self.b6) < 0:
            raise ConfigurationError(f"{self.name}: b3..b6 must be >= 0")
        if self.duty is Duty.LIGHT:
            if not 0 < self.v_c <= MAX_SPEED:
                raise ConfigurationError(f"{self.name}: v_c must lie in (0, {MAX_SPEED}]")
            if not self.beta > 0:
                raise ConfigurationError(f"{self.name}: beta must be positive")
        elif self.h0 < 0 or self.h1 < 0:
            raise ConfigurationError(f"{self.name}: h0 and h1 must be >= 0")

    @property
    def default_specific_energy(self):
        """J/g; gasoline for light duty, diesel otherwise."""
        return SPECIFIC_ENERGY_GASOLINE if self.duty is Duty.LIGHT else SPECIFIC_ENERGY_DIESEL

    @property
    def singular_at_rest(self):
        """True when Q(0) = 0 while P(0) > 0, so a_min(0) is unbounded."""
        return self.q0 == 0.0 and self.p0 > 0.0

    def to_dict(self):
        out = {"name": self.name, "duty": self.duty.value}
        for key in PARAM_KEYS:
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown parameter keys: {sorted(unknown)}")
        for key in ("name", "duty"):
            if key not in data:
                raise ConfigurationError(f"missing key {key!r}")
        try:
            data["duty"] = Duty(data["duty"])
        except ValueError:
            raise ConfigurationError(f"unknown duty class {data['duty']!r}") from None
        return cls(**data)

    def with_updates(self, **changes):
        return replace(self, **changes)


def load_params(path):
    """Read a parameter file (JSON with keys named after the fitted symbols)."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"parameter file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    params = SimplifiedParams.from_dict(data)
    if params.singular_at_rest:
        logger.info("%s: Q(0) = 0 with P(0) > 0; a_min is unbounded at v = 0", params.name)
    return params


def save_params(params, path):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(params.to_dict(), indent=2) + "\n", encoding="utf-8")
    tmp.replace(path)


def bundled_vehicles():
    """Identifiers of the six bundled parameter sets."""
    root = resources.files("vehicle_energy") / "data" / "vehicles"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_bundled(key):
    """Load a bundled parameter set, e.g. ``load_bundled("compact_sedan")``."""
    root = resources.files("vehicle_energy") / "data" / "vehicles"
    resource = root / f"{key}.json"
    if not resource.is_file():
        raise ConfigurationError(f"no bundled vehicle {key!r}; available: {bundled_vehicles()}")
    with resources.as_file(resource) as path:
        return load_params(path)


# -- polynomial pieces ----------------------------------------------------------

def cruise_poly(p, v):
    return p.c0 + p.c1 * v + p.c2 * v**2 + p.c3 * v**3


def linear_poly(p, v):
    return p.p0 + p.p1 * v + p.p2 * v**2


def quadratic_poly(p, v):
    return p.q0 + p.q1 * v


def grade_poly(p, v):
    return p.z0 + p.z1 * v + p.z2 * v**2


def _a_min_array(p, v):
    # Q = 0 with P = 0 gives a_min = 0; Q = 0 with P > 0 is the unbounded
    # limit, where Q a_+^2 vanishes and a_+ = a.
    P = linear_poly(p, v)
    Q = quadratic_poly(p, v)
    safe_q = np.where(Q > 0, Q, 1.0)
    with np.errstate(over="ignore"):  # tiny Q overflows to -inf, the same limit
        return np.where(Q > 0, -P / (2.0 * safe_q), np.where(P > 0, -np.inf, 0.0))


def a_min(params, v):
    """Acceleration at the vertex of the quadratic in ``a``, ``-P(v) / (2 Q(v))``.

    Raises :class:`SingularityError` when ``Q(v) = 0`` and ``P(v) > 0``.
    """
    P = linear_poly(params, v)
    Q = quadratic_poly(params, v)
    if Q > 0:
        return -P / (2.0 * Q)
    if P == 0:
        return 0.0
    raise SingularityError(f"{params.name}: Q({v}) = 0 while P({v}) = {P} > 0")


def fuel_cut_boundary(params, v, theta=0.0):
    """Acceleration below which a light-duty vehicle cuts fuel above ``v_c``."""
    if params.duty is not Duty.LIGHT:
        raise UnsupportedOperationError(
            f"{params.name}: medium/heavy-duty vehicles have no fuel-cut boundary")
    return (params.a0 + params.a1 * v + params.a2 * theta
            + params.a3 * v**2 + params.a4 * v * theta)


def _a_max_array(p, v, theta):
    v = np.asarray(v, dtype=float)
    positive = v > 0
    safe_v = np.where(positive, v, 1.0)
    with np.errstate(over="ignore"):  # tiny speeds: b2/v -> inf, masked by b1
        curved = np.where(positive, p.b2 / safe_v - p.b3 * v**2, np.inf)
    return np.minimum(p.b1, curved) - np.minimum(p.b4, p.b5 + p.b6 * v) * theta


def a_max_feasible(params, v, theta=0.0):
    """Largest feasible acceleration at speed ``v`` and grade ``theta``."""
    if not (math.isfinite(v) and math.isfinite(theta)):
        raise InputError("non-finite speed or grade")
    if v < 0:
        raise InputError("a_max is defined for v >= 0 only")
    return float(_a_max_array(params, v, theta))


def polynomial_part(params, v, a, theta):
    """``f_p`` with the acceleration capped from below at ``a_min(v)``."""
    v = np.asarray(v, dtype=float)
    a_plus = np.maximum(a, _a_min_array(params, v))
    return (cruise_poly(params, v) + linear_poly(params, v) * a_plus
            + quadratic_poly(params, v) * a_plus**2 + grade_poly(params, v) * theta)


def lower_bound(params, v):
    """Fuel floor: ``beta`` / 0 around ``v_c`` (light duty) or ``h0 + h1 v``."""
    v = np.asarray(v, dtype=float)
    if params.duty is Duty.LIGHT:
        return np.where(v <= params.v_c, params.beta, 0.0)
    return params.h0 + params.h1 * v


def in_fuel_cut(params, v, a, theta):
    """Light duty only: ``v > v_c`` and ``a < a_c(v, theta)``, where fuel is zero."""
    v = np.asarray(v, dtype=float)
    if params.duty is not Duty.LIGHT:
        return np.zeros(np.broadcast(v, a, theta).shape, dtype=bool)
    return (v > params.v_c) & (a < fuel_cut_boundary(params, v, theta))


# -- evaluation -------------------------------------------------------------------

@dataclass(frozen=True)
class SimplifiedEval:
    fuel_rate: float  # g/s
    power: float  # W
    feasibility: Feasibility
    projected: bool


@dataclass(frozen=True)
class SimplifiedBatch:
    """Element-wise results of :func:`evaluate`; arrays share the broadcast shape."""

    fuel_rate: np.ndarray
    power: np.ndarray
    feasibility: np.ndarray
    projected: np.ndarray

    def __getitem__(self, idx):
        return SimplifiedEval(float(self.fuel_rate[idx]), float(self.power[idx]),
                              Feasibility(int(self.feasibility[idx])), bool(self.projected[idx]))

    def __len__(self):
        return len(self.fuel_rate)


def evaluate(params, v, a, theta=0.0, project=False, specific_energy=None):
    """Vectorized fuel rate over broadcastable ``v``, ``a``, ``theta`` arrays.

    Infeasible points (``a > a_max``) keep the formula value unless
    ``project`` is set, in which case ``a`` is lowered to ``a_max`` first.
    Negative speeds give zero fuel and feasibility code 2.
    """
    v, a, theta = np.broadcast_arrays(np.asarray(v, dtype=float),
                                      np.asarray(a, dtype=float),
                                      np.asarray(theta, dtype=float))
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(a)) and np.all(np.isfinite(theta))):
        raise InputError("non-finite speed, acceleration or grade")
    if specific_energy is None:
        specific_energy = params.default_specific_energy

    negative = v < 0
    v_eval = np.where(negative, 0.0, v)
    limit = _a_max_array(params, v_eval, theta)
    infeasible = (a > limit) & ~negative
    projected = infeasible & bool(project)
    a_eval = np.where(projected, limit, a)

    fuel = np.maximum(lower_bound(params, v_eval),
                      polynomial_part(params, v_eval, a_eval, theta))
    fuel = np.where(negative | in_fuel_cut(params, v_eval, a_eval, theta),
                    0.0, np.maximum(fuel, 0.0))

    feas = np.full(v.shape, int(Feasibility.FEASIBLE), dtype=np.int8)
    feas[infeasible] = Feasibility.INFEASIBLE
    feas[negative] = Feasibility.NEGATIVE_SPEED
    return SimplifiedBatch(fuel, fuel * specific_energy, feas, projected)


def eval_fuel_rate(params, pt, project=False, specific_energy=None):
    """Evaluate one :class:`OperatingPoint`; same arithmetic as :func:`evaluate`."""
    pt.check_finite()
    batch = evaluate(params, np.array([pt.v]), np.array([pt.a]), np.array([pt.theta]),
                     project=project, specific_energy=specific_energy)
    return batch[0]


class SimplifiedModel:
    """Callable wrapper exposing a parameter set through the oracle interface."""

    def __init__(self, params, project=False, specific_energy=None):
        self.params = params
        self.project = project
        self.specific_energy = specific_energy
        self.thread_safe = True

    def __call__(self, v, a, theta=0.0):
        res = evaluate(self.params, v, a, theta, self.project, self.specific_energy)
        return res.fuel_rate, res.feasibility == Feasibility.FEASIBLE

    def fuel_rate(self, pt):
        return eval_fuel_rate(self.params, pt, self.project, self.specific_energy).fuel_rate

    def __repr__(self):
        return f"SimplifiedModel({self.params.name!r})"

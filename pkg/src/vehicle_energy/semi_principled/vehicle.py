"""Vehicle definition for the gear-resolved model, and its JSON file format.

The file holds four sections, ``principled_constants``, ``empirical_constants``,
``principled_maps`` and ``empirical_maps``. Everything indexed by gear is a
JSON object keyed by the gear number starting at ``"1"``, so the keys read
the same as the gear numbers used throughout this package.
"""

from __future__ import annotations

import enum
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from .maps import (
    GearGrid,
    GearLookup,
    Grid1D,
    LinearForm,
    TensorPoly,
    TwoFacetSurface,
    _gear_keyed,
    map_form_from_dict,
)

logger = logging.getLogger(__name__)

GRAVITY = 9.81  # m/s^2

FUEL_DEGREES = (2, 3)  # engine speed, engine torque
OPEN_SPEED_DEGREES = (3, 2)  # output speed, wheel force; first gear


class Transmission(str, enum.Enum):
    AUTOMATIC = "Automatic"
    MANUAL = "Manual"


def _positive(name, value):
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ConfigurationError(f"{name} must be positive and finite, got {value}")
    return value


def _per_gear(name, values):
    if isinstance(values, dict):
        values = _gear_keyed(values, name)
    out = tuple(_positive(f"{name}[{k + 1}]", v) for k, v in enumerate(values))
    if not out:
        raise ConfigurationError(f"{name}: at least one gear is required")
    return out


def _map_forms(data, name):
    return tuple(map_form_from_dict(m) for m in _gear_keyed(data[name], name))


def _gear_dict(values):
    return {str(k + 1): v for k, v in enumerate(values)}


@dataclass(frozen=True)
class PrincipledConstants:
    """Physical vehicle data known from the detailed model.

    ``m_general`` and ``g_r`` are per gear, first gear first.
    """

    m_vehicle: float  # kg
    m_general: tuple  # kg per gear
    r_tire: float  # m
    R_a: float  # N s^2/m^2
    R_r: float  # N s/m
    R_g: float  # N
    d_r: float  # final drive ratio
    g_r: tuple  # gear ratios
    N_max: float  # rad/s
    N_min: float  # rad/s
    g_const: float = GRAVITY

    def __post_init__(self):
        for name in ("m_vehicle", "r_tire", "R_a", "R_r", "R_g", "d_r", "N_max", "N_min",
                     "g_const"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))
        object.__setattr__(self, "m_general", _per_gear("m_general", self.m_general))
        object.__setattr__(self, "g_r", _per_gear("g_r", self.g_r))
        if len(self.m_general) != len(self.g_r):
            raise ConfigurationError("m_general and g_r disagree on the number of gears")
        light = [k + 1 for k, m in enumerate(self.m_general) if m < self.m_vehicle]
        if light:
            raise ConfigurationError(f"m_general below m_vehicle in gears {light}")
        if self.N_min >= self.N_max:
            raise ConfigurationError("N_min must be below N_max")
        if any(b >= a for a, b in zip(self.g_r, self.g_r[1:])):
            logger.warning("gear ratios are not strictly decreasing: %s", self.g_r)

    @property
    def n_gears(self):
        return len(self.g_r)

    def to_dict(self):
        return {"m_vehicle": self.m_vehicle, "m_general": _gear_dict(self.m_general),
                "r_tire": self.r_tire, "R_a": self.R_a, "R_r": self.R_r, "R_g": self.R_g,
                "d_r": self.d_r, "g_r": _gear_dict(self.g_r), "N_max": self.N_max,
                "N_min": self.N_min, "g_const": self.g_const}

    @classmethod
    def from_dict(cls, data):
        return cls(**_known(cls, data, "principled_constants"))


@dataclass(frozen=True)
class EmpiricalConstants:
    """Constants tuned from drive-cycle data.

    ``downshift_speeds[j]`` is the braking speed (m/s) below which gear
    ``j + 2`` shifts down to gear ``j + 1``; together they define the
    piecewise-constant braking gear map. The first-gear torque correction is
    the line ``torque_correction_slope * a`` through the origin.
    """

    T_min: float  # Nm
    f_idle: float  # g/s
    v_c: float  # m/s
    F_wc: float  # N
    downshift_speeds: tuple  # m/s, one per adjacent gear pair
    torque_correction_slope: float  # Nm per m/s^2
    torque_correction_intercept: float = 0.0

    def __post_init__(self):
        for name in ("T_min", "F_wc", "torque_correction_slope"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ConfigurationError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "f_idle", _positive("f_idle", self.f_idle))
        object.__setattr__(self, "v_c", _positive("v_c", self.v_c))
        speeds = self.downshift_speeds
        if isinstance(speeds, dict):
            # Keyed by the gear being left: {"2": ..., "3": ...}.
            by_gear = {int(k): s for k, s in speeds.items()}
            keys = sorted(by_gear)
            if keys != list(range(2, len(keys) + 2)):
                raise ConfigurationError(f"downshift_speeds must be keyed 2..n, got {keys}")
            speeds = [by_gear[k] for k in keys]
        speeds = tuple(float(s) for s in speeds)
        if not all(math.isfinite(s) and s >= 0 for s in speeds):
            raise ConfigurationError("downshift speeds must be finite and non-negative")
        if any(b <= a for a, b in itertools.pairwise(speeds)):
            raise ConfigurationError(f"downshift speeds must increase with gear: {speeds}")
        object.__setattr__(self, "downshift_speeds", speeds)
        if float(self.torque_correction_intercept) != 0.0:
            raise ConfigurationError("the torque correction must pass through the origin")
        object.__setattr__(self, "torque_correction_intercept", 0.0)

    def torque_correction(self, a):
        return self.torque_correction_slope * np.asarray(a, dtype=float)

    def downshift_gear(self, v):
        """Braking gear at speed ``v``: one plus the number of thresholds at or below ``v``."""
        v = np.asarray(v, dtype=float)
        return 1 + np.searchsorted(np.asarray(self.downshift_speeds), v, side="right")

    def to_dict(self):
        return {"T_min": self.T_min, "f_idle": self.f_idle, "v_c": self.v_c, "F_wc": self.F_wc,
                "downshift_speeds": {str(k + 2): s for k, s in enumerate(self.downshift_speeds)},
                "torque_correction_slope": self.torque_correction_slope,
                "torque_correction_intercept": self.torque_correction_intercept}

    @classmethod
    def from_dict(cls, data):
        return cls(**_known(cls, data, "empirical_constants"))


@dataclass(frozen=True)
class PrincipledMaps:
    """Tabulated maps taken directly from the detailed model.

    ``V_upshift(alpha, k)`` is the speed at which the manual gearbox shifts
    up into gear ``k``; ``V_downshift(alpha, k)`` the speed below which it
    leaves gear ``k``. Their first-gear columns are conventionally zero.
    """

    K_upshift: GearLookup
    T_max_of_N: Grid1D
    T_wmax_of_v: Grid1D
    T_wmax_of_v_k: GearGrid
    V_upshift: GearGrid | None = None
    V_downshift: GearGrid | None = None
    alpha_s: float | None = None

    def __post_init__(self):
        shared = np.intersect1d(self.T_wmax_of_v.x, self.T_wmax_of_v_k.x)
        if shared.size:
            overall = self.T_wmax_of_v(shared)
            per_gear = np.max(self.T_wmax_of_v_k.values[np.isin(self.T_wmax_of_v_k.x, shared)],
                              axis=1)
            if np.any(overall < per_gear - 1e-9 * np.abs(per_gear)):
                logger.warning("T_wmax(v) lies below the per-gear maximum wheel torque")
        manual = (self.V_upshift, self.V_downshift, self.alpha_s)
        if any(m is not None for m in manual) and not all(m is not None for m in manual):
            raise ConfigurationError("manual shift maps need V_upshift, V_downshift and alpha_s")
        if self.alpha_s is not None:
            object.__setattr__(self, "alpha_s", float(self.alpha_s))
            if not 0 < self.alpha_s <= 1:
                raise ConfigurationError("alpha_s must lie in (0, 1]")

    @property
    def has_manual_maps(self):
        return self.V_upshift is not None

    def to_dict(self):
        out = {"K_upshift": self.K_upshift.to_dict(), "T_max_of_N": self.T_max_of_N.to_dict(),
               "T_wmax_of_v": self.T_wmax_of_v.to_dict(),
               "T_wmax_of_v_k": self.T_wmax_of_v_k.to_dict()}
        if self.has_manual_maps:
            out.update(V_upshift=self.V_upshift.to_dict(), V_downshift=self.V_downshift.to_dict(),
                       alpha_s=self.alpha_s)
        return out

    @classmethod
    def from_dict(cls, data):
        data = _known(cls, data, "principled_maps")
        kwargs = {
            "K_upshift": GearLookup.from_dict(data["K_upshift"]),
            "T_max_of_N": Grid1D.from_dict(data["T_max_of_N"], "T_max_of_N"),
            "T_wmax_of_v": Grid1D.from_dict(data["T_wmax_of_v"], "T_wmax_of_v"),
            "T_wmax_of_v_k": GearGrid.from_dict(data["T_wmax_of_v_k"], "T_wmax_of_v_k"),
        }
        for name in ("V_upshift", "V_downshift"):
            if data.get(name) is not None:
                kwargs[name] = GearGrid.from_dict(data[name], name)
        if data.get("alpha_s") is not None:
            kwargs["alpha_s"] = data["alpha_s"]
        return cls(**kwargs)


@dataclass(frozen=True)
class EmpiricalMaps:
    """Maps fitted to steady-state test data.

    ``engine_speed[k-1]`` and ``engine_torque[k-1]`` map (output speed,
    wheel force) to engine speed and torque in gear ``k``. First gear runs
    with an open torque converter and uses a cubic-by-quadratic polynomial
    for speed and a two-facet surface for torque; locked gears use a line in
    output speed and a plane.
    """

    fuel_poly: TensorPoly
    engine_speed: tuple
    engine_torque: tuple

    def __post_init__(self):
        if not isinstance(self.fuel_poly, TensorPoly) or self.fuel_poly.degrees != FUEL_DEGREES:
            raise ConfigurationError(
                f"fuel map must be a tensor polynomial of degrees {FUEL_DEGREES}"
            )
        speed, torque = tuple(self.engine_speed), tuple(self.engine_torque)
        if len(speed) != len(torque) or not speed:
            raise ConfigurationError("engine speed and torque maps disagree on the gear count")
        if not (isinstance(speed[0], TensorPoly) and speed[0].degrees == OPEN_SPEED_DEGREES):
            raise ConfigurationError(
                f"first-gear speed map must be a tensor polynomial of degrees {OPEN_SPEED_DEGREES}")
        if not isinstance(torque[0], TwoFacetSurface):
            raise ConfigurationError("first-gear torque map must be a two-facet surface")
        for k in range(1, len(speed)):
            if not (isinstance(speed[k], LinearForm) and not speed[k].uses_second_input):
                raise ConfigurationError(f"gear {k + 1}: speed map must be linear in output speed")
            if not (isinstance(torque[k], LinearForm) and torque[k].uses_second_input):
                raise ConfigurationError(f"gear {k + 1}: torque map must be a plane")
        object.__setattr__(self, "engine_speed", speed)
        object.__setattr__(self, "engine_torque", torque)

    @property
    def n_gears(self):
        return len(self.engine_speed)

    def to_dict(self):
        return {"fuel_poly": self.fuel_poly.to_dict(),
                "engine_speed": _gear_dict([m.to_dict() for m in self.engine_speed]),
                "engine_torque": _gear_dict([m.to_dict() for m in self.engine_torque])}

    @classmethod
    def from_dict(cls, data):
        data = _known(cls, data, "empirical_maps")
        return cls(map_form_from_dict(data["fuel_poly"]),
                   _map_forms(data, "engine_speed"),
                   _map_forms(data, "engine_torque"))


@dataclass(frozen=True)
class Weights:
    """Objective weights for gear selection.

    ``c_m`` scales the manual-transmission gear penalty, which enters the
    objective directly in g/s per m/s of speed shortfall.
    """

    w_T: float = 10.0
    w_N: float = 10.0
    w_F: float = 100.0
    w_g: float = 100.0
    c_m: float = 0.01

    def __post_init__(self):
        for name in ("w_T", "w_N", "w_F", "w_g", "c_m"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))


@dataclass(frozen=True)
class SemiPrincipledVehicle:
    name: str
    constants: PrincipledConstants
    empirical: EmpiricalConstants
    pmaps: PrincipledMaps
    emaps: EmpiricalMaps
    transmission: Transmission = Transmission.AUTOMATIC
    weights: Weights = field(default_factory=Weights)

    def __post_init__(self):
        object.__setattr__(self, "transmission", Transmission(self.transmission))
        counts = {"principled constants": self.constants.n_gears,
                  "empirical maps": self.emaps.n_gears,
                  "T_wmax_of_v_k": self.pmaps.T_wmax_of_v_k.n_gears,
                  "downshift speeds + 1": len(self.empirical.downshift_speeds) + 1}
        if self.pmaps.has_manual_maps:
            counts["V_upshift"] = self.pmaps.V_upshift.n_gears
            counts["V_downshift"] = self.pmaps.V_downshift.n_gears
        if len(set(counts.values())) != 1:
            raise ConfigurationError(f"{self.name}: gear counts disagree: {counts}")
        if int(self.pmaps.K_upshift.gear.max()) > self.n_gears:
            raise ConfigurationError(f"{self.name}: K_upshift names a gear above {self.n_gears}")
        if self.transmission is Transmission.MANUAL and not self.pmaps.has_manual_maps:
            raise ConfigurationError(f"{self.name}: manual transmission needs manual shift maps")

    @property
    def n_gears(self):
        return self.constants.n_gears

    def to_dict(self):
        w = self.weights
        return {"name": self.name, "transmission": self.transmission.value,
                "weights": {"w_T": w.w_T, "w_N": w.w_N, "w_F": w.w_F, "w_g": w.w_g, "c_m": w.c_m},
                "principled_constants": self.constants.to_dict(),
                "empirical_constants": self.empirical.to_dict(),
                "principled_maps": self.pmaps.to_dict(),
                "empirical_maps": self.emaps.to_dict()}

    @classmethod
    def from_dict(cls, data):
        required = ("principled_constants", "empirical_constants", "principled_maps",
                    "empirical_maps")
        missing = [k for k in required if k not in data]
        if missing:
            raise ConfigurationError(f"vehicle definition lacks sections {missing}")
        try:
            return cls(name=data.get("name", "vehicle"),
                       constants=PrincipledConstants.from_dict(data["principled_constants"]),
                       empirical=EmpiricalConstants.from_dict(data["empirical_constants"]),
                       pmaps=PrincipledMaps.from_dict(data["principled_maps"]),
                       emaps=EmpiricalMaps.from_dict(data["empirical_maps"]),
                       transmission=data.get("transmission", Transmission.AUTOMATIC.value),
                       weights=Weights(**data.get("weights", {})))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"malformed vehicle definition: {exc}") from None


def _known(cls, data, section):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{section} must be an object")
    allowed = set(cls.__dataclass_fields__)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigurationError(f"{section}: unknown keys {sorted(unknown)}")
    return data


def is_vehicle_document(data):
    return isinstance(data, dict) and "principled_constants" in data


def load_vehicle(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"vehicle file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    return SemiPrincipledVehicle.from_dict(data)


def save_vehicle(vehicle, path):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(vehicle.to_dict(), indent=1) + "\n", encoding="utf-8")
    tmp.replace(path)

"""Gridded lookup maps and fitted map forms used by the gear-resolved model.

Gridded maps interpolate linearly (1-D) or bilinearly (2-D). Queries outside
the grid are clamped to the boundary value, never extrapolated, and each
clamped query is tallied in an optional :class:`ExtrapolationCounter`.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError


class ExtrapolationCounter:
    """Thread-safe tally of map queries that fell outside their grid."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def add(self, n):
        n = int(n)
        if n:
            with self._lock:
                self._count += n

    def merge(self, other):
        self.add(other.value)

    @property
    def value(self):
        with self._lock:
            return self._count

    def reset(self):
        with self._lock:
            self._count = 0


def _axis(values, label):
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ConfigurationError(f"{label}: empty grid")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{label}: non-finite grid abscissa")
    if arr.size > 1 and not np.all(np.diff(arr) > 0):
        raise ConfigurationError(f"{label}: grid must be strictly increasing")
    arr.flags.writeable = False
    return arr


def _table(values, shape, label):
    arr = np.array(values, dtype=float)
    if arr.shape != shape:
        raise ConfigurationError(f"{label}: table shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{label}: non-finite map value")
    arr.flags.writeable = False
    return arr


def _locate(axis, q, counter):
    """Cell index and fractional position of each query, with clamping."""
    q = np.asarray(q, dtype=float)
    if counter is not None:
        counter.add(np.count_nonzero((q < axis[0]) | (q > axis[-1])))
    if axis.size == 1:
        return np.zeros(q.shape, dtype=np.intp), np.zeros(q.shape), 0
    qc = np.clip(q, axis[0], axis[-1])
    idx = np.clip(np.searchsorted(axis, qc, side="right") - 1, 0, axis.size - 2)
    frac = (qc - axis[idx]) / (axis[idx + 1] - axis[idx])
    return idx, frac, 1


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Tabulated ``y(x)`` with linear interpolation."""

    x: np.ndarray
    y: np.ndarray
    label: str = "map"

    def __post_init__(self):
        x = _axis(self.x, self.label)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", _table(self.y, x.shape, self.label))

    def __call__(self, q, counter=None):
        idx, frac, step = _locate(self.x, q, counter)
        return (1.0 - frac) * self.y[idx] + frac * self.y[idx + step]

    def to_dict(self):
        return {"x": self.x.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, data, label="map"):
        return cls(data["x"], data["y"], label)


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Tabulated ``z(x, y)`` on a rectangular grid, ``z[i, j] = z(x[i], y[j])``."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    label: str = "map"

    def __post_init__(self):
        x = _axis(self.x, self.label + " (first axis)")
        y = _axis(self.y, self.label + " (second axis)")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", _table(self.z, (x.size, y.size), self.label))

    def __call__(self, qx, qy, counter=None):
        qx, qy = np.broadcast_arrays(np.asarray(qx, dtype=float), np.asarray(qy, dtype=float))
        i, s, di = _locate(self.x, qx, counter)
        j, t, dj = _locate(self.y, qy, counter)
        z = self.z
        return ((1 - s) * ((1 - t) * z[i, j] + t * z[i, j + dj])
                + s * ((1 - t) * z[i + di, j] + t * z[i + di, j + dj]))

    def to_dict(self):
        return {"x": self.x.tolist(), "y": self.y.tolist(), "z": self.z.tolist()}

    @classmethod
    def from_dict(cls, data, label="map"):
        return cls(data["x"], data["y"], data["z"], label)


def interp_map_1d(grid, x, counter=None):
    return grid(x, counter)


def interp_map_2d(grid, x, y, counter=None):
    return grid(x, y, counter)


@dataclass(frozen=True, eq=False)
class GearGrid:
    """One 1-D table per gear sharing an abscissa; ``values[i, k-1]`` is gear ``k``.

    Gears are categorical, so only the continuous axis is interpolated.
    """

    x: np.ndarray
    values: np.ndarray
    label: str = "map"

    def __post_init__(self):
        x = _axis(self.x, self.label)
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != x.size:
            raise ConfigurationError(
                f"{self.label}: table shape {vals.shape} does not match {x.size} abscissae")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", _table(vals, vals.shape, self.label))

    @property
    def n_gears(self):
        return self.values.shape[1]

    def __call__(self, q, gear, counter=None):
        """Interpolate at ``q``; ``gear`` is 1-based and broadcasts with ``q``."""
        q, gear = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(gear))
        col = gear.astype(np.intp) - 1
        idx, frac, step = _locate(self.x, q, counter)
        return (1.0 - frac) * self.values[idx, col] + frac * self.values[idx + step, col]

    def to_dict(self):
        return {"x": self.x.tolist(),
                "gears": {str(k + 1): self.values[:, k].tolist() for k in range(self.n_gears)}}

    @classmethod
    def from_dict(cls, data, label="map"):
        columns = _gear_keyed(data["gears"], label)
        return cls(data["x"], np.column_stack(columns), label)


@dataclass(frozen=True, eq=False)
class GearLookup:
    """Integer gear tabulated over (pedal angle, speed), read by nearest-lower cell."""

    alpha: np.ndarray
    v: np.ndarray
    gear: np.ndarray
    label: str = "K_upshift"

    def __post_init__(self):
        a = _axis(self.alpha, self.label + " (pedal axis)")
        v = _axis(self.v, self.label + " (speed axis)")
        table = np.array(self.gear)
        if table.shape != (a.size, v.size):
            raise ConfigurationError(f"{self.label}: table shape {table.shape}, "
                                     f"expected {(a.size, v.size)}")
        if not np.all(table == np.round(table)) or table.min() < 1:
            raise ConfigurationError(f"{self.label}: gears must be integers >= 1")
        table = table.astype(np.int64)
        table.flags.writeable = False
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "gear", table)

    def _cell(self, axis, q, counter):
        q = np.asarray(q, dtype=float)
        if counter is not None:
            counter.add(np.count_nonzero((q < axis[0]) | (q > axis[-1])))
        return np.clip(np.searchsorted(axis, q, side="right") - 1, 0, axis.size - 1)

    def __call__(self, alpha, v, counter=None):
        alpha, v = np.broadcast_arrays(np.asarray(alpha, dtype=float), np.asarray(v, dtype=float))
        return self.gear[self._cell(self.alpha, alpha, counter), self._cell(self.v, v, counter)]

    def to_dict(self):
        return {"alpha": self.alpha.tolist(), "v": self.v.tolist(), "gear": self.gear.tolist()}

    @classmethod
    def from_dict(cls, data, label="K_upshift"):
        return cls(data["alpha"], data["v"], data["gear"], label)


def _gear_keyed(mapping, label):
    """Values of a ``{"1": ..., "2": ...}`` mapping in gear order, checking contiguity."""
    try:
        keys = sorted(int(k) for k in mapping)
    except ValueError:
        raise ConfigurationError(f"{label}: gear keys must be integers") from None
    if keys != list(range(1, len(keys) + 1)):
        raise ConfigurationError(f"{label}: gears must be numbered 1..n, got {keys}")
    return [mapping[str(k)] if str(k) in mapping else mapping[k] for k in keys]


# -- fitted map forms -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TensorPoly:
    """``sum_ij coef[i, j] x**i y**j``, i.e. degree ``shape[0]-1`` in x, ``shape[1]-1`` in y."""

    coef: np.ndarray

    def __post_init__(self):
        c = np.array(self.coef, dtype=float)
        if c.ndim != 2 or not np.all(np.isfinite(c)):
            raise ConfigurationError("polynomial coefficients must be a finite 2-D array")
        c.flags.writeable = False
        object.__setattr__(self, "coef", c)

    @property
    def degrees(self):
        return self.coef.shape[0] - 1, self.coef.shape[1] - 1

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        # Horner in x of Horner-in-y rows.
        out = 0.0
        for row in self.coef[::-1]:
            inner = 0.0
            for c in row[::-1]:
                inner = inner * y + c
            out = out * x + inner
        return out + np.zeros(np.broadcast(x, y).shape)

    def to_dict(self):
        return {"kind": "tensor_poly", "coef": self.coef.tolist()}


@dataclass(frozen=True, eq=False)
class LinearForm:
    """``c0 + c1 x`` (one input) or ``c0 + c1 x + c2 y`` (two inputs)."""

    coef: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.coef)
        if len(c) not in (2, 3) or not all(np.isfinite(c)):
            raise ConfigurationError("linear form needs 2 or 3 finite coefficients")
        object.__setattr__(self, "coef", c)

    @property
    def uses_second_input(self):
        return len(self.coef) == 3

    def __call__(self, x, y=0.0):
        x = np.asarray(x, dtype=float)
        out = self.coef[0] + self.coef[1] * x
        if len(self.coef) == 3:
            out = out + self.coef[2] * np.asarray(y, dtype=float)
        return out + np.zeros(np.broadcast(x, y).shape)

    def to_dict(self):
        return {"kind": "linear", "coef": list(self.coef)}


CONTINUITY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class TwoFacetSurface:
    """Continuous piecewise-linear surface made of two planes.

    The break line is ``normal[0] x + normal[1] y = offset``. Points with
    ``normal . (x, y) <= offset`` use ``lower`` (coefficients ``c0, cx, cy``),
    the rest use ``upper``. Construction checks that the planes agree along
    the break line, which holds exactly when their difference is a multiple
    of ``normal . (x, y) - offset``.
    """

    lower: tuple
    upper: tuple
    normal: tuple
    offset: float

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        normal = tuple(float(v) for v in self.normal)
        offset = float(self.offset)
        if len(lower) != 3 or len(upper) != 3 or len(normal) != 2:
            raise ConfigurationError("two-facet surface: planes need 3 and the normal 2 entries")
        if not np.all(np.isfinite(lower + upper + normal + (offset,))):
            raise ConfigurationError("two-facet surface: non-finite coefficient")
        if normal == (0.0, 0.0):
            raise ConfigurationError("two-facet surface: zero break-line normal")
        d = np.subtract(upper, lower)
        # d must equal k * (-offset, nx, ny) for some k.
        basis = np.array([-offset, normal[0], normal[1]])
        k = d @ basis / (basis @ basis)
        scale = max(1.0, np.abs(lower).max(), np.abs(upper).max())
        if np.abs(d - k * basis).max() > CONTINUITY_TOL * scale:
            raise ConfigurationError("two-facet surface is discontinuous along its break line")
        for name, value in (("lower", lower), ("upper", upper), ("normal", normal),
                            ("offset", offset)):
            object.__setattr__(self, name, value)

    @classmethod
    def plane(cls, coef):
        """Degenerate surface equal to one plane everywhere."""
        return cls(tuple(coef), tuple(coef), (1.0, 0.0), 0.0)

    @classmethod
    def hinge(cls, base, kink, normal, offset):
        """``base(x, y) + kink * max(0, normal . (x, y) - offset)``."""
        base = np.asarray(base, dtype=float)
        upper = base + kink * np.array([-offset, normal[0], normal[1]])
        return cls(tuple(base), tuple(upper), tuple(normal), offset)

    def side(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.normal[0] * x + self.normal[1] * y > self.offset

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        lo = self.lower[0] + self.lower[1] * x + self.lower[2] * y
        hi = self.upper[0] + self.upper[1] * x + self.upper[2] * y
        return np.where(self.side(x, y), hi, lo)

    def canonical(self):
        """Equivalent surface whose largest normal component is exactly +1.

        The same surface can be written with any positive rescaling of the
        break line; this form makes coefficient-wise comparison meaningful.
        A degenerate (single-plane) surface keeps the line ``x = 0``.
        """
        if self.lower == self.upper:
            return TwoFacetSurface.plane(self.lower)
        n = np.asarray(self.normal)
        i = int(np.argmax(np.abs(n)))
        s = 1.0 / n[i]
        lower, upper = (self.lower, self.upper) if s > 0 else (self.upper, self.lower)
        normal = n * s
        normal[i] = 1.0
        return TwoFacetSurface(lower, upper, tuple(normal), self.offset * s)

    def to_dict(self):
        return {"kind": "two_facet", "lower": list(self.lower), "upper": list(self.upper),
                "normal": list(self.normal), "offset": self.offset}


def map_form_from_dict(data):
    """Rebuild a fitted map form from its ``to_dict`` output."""
    kind = data.get("kind")
    if kind == "tensor_poly":
        return TensorPoly(data["coef"])
    if kind == "linear":
        return LinearForm(data["coef"])
    if kind == "two_facet":
        return TwoFacetSurface(data["lower"], data["upper"], data["normal"], data["offset"])
    raise ConfigurationError(f"unknown map form {kind!r}")

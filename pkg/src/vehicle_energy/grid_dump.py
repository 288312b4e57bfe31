"""Black-box grid dumps of a fuel model and a trilinear model rebuilt from them.

A dump tabulates ``fuel_rate`` and a 0/1 feasibility indicator over a
regular (v, a, theta) grid. Two encodings are supported, chosen by file
suffix:

* ``.npz``: compressed NumPy archive with arrays ``v``, ``a``, ``theta``,
  ``fuel_rate`` and ``feasible``;
* anything else: CSV whose first three lines declare the axes as
  ``# axis,<name>,<start>,<stop>,<count>``, followed by the header
  ``v,a,theta,fuel_rate,feasible`` and one row per node, theta varying
  fastest.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ParseError
from .semi_principled.maps import ExtrapolationCounter
from .tabular import atomic_write_bytes, atomic_write_text

DEFAULT_AXES = {"v": (0.0, 35.0, 141), "a": (-3.0, 3.0, 121), "theta": (-0.03, 0.03, 13)}
AXIS_NAMES = ("v", "a", "theta")


def axes_from_overrides(overrides=None):
    """Axis arrays from ``{"v": (start, stop, n), ...}``; missing axes use the defaults."""
    overrides = {**DEFAULT_AXES, **(overrides or {})}
    out = []
    for name in AXIS_NAMES:
        start, stop, n = overrides[name]
        n = int(n)
        if n < 2 or not stop > start:
            raise ConfigurationError(f"axis {name}: need stop > start and at least 2 nodes")
        out.append(np.linspace(float(start), float(stop), n))
    return tuple(out)


def tabulate(model, axes):
    """Evaluate ``model(v, a, theta) -> (fuel, feasible)`` on the full grid."""
    V, A, TH = np.meshgrid(*axes, indexing="ij")
    fuel, feasible = model(V.ravel(), A.ravel(), TH.ravel())
    shape = V.shape
    return (np.asarray(fuel, dtype=float).reshape(shape),
            np.asarray(feasible, dtype=bool).reshape(shape))


def write_grid(path, axes, fuel, feasible):
    path = Path(path)
    v, a, th = axes
    if path.suffix == ".npz":
        raw = io.BytesIO()
        np.savez_compressed(raw, v=v, a=a, theta=th, fuel_rate=fuel,
                            feasible=feasible.astype(np.int8))
        atomic_write_bytes(path, raw.getvalue())
        return
    V, A, TH = np.meshgrid(v, a, th, indexing="ij")
    buf = io.StringIO()
    for name, axis in zip(AXIS_NAMES, axes):
        buf.write(f"# axis,{name},{float(axis[0])!r},{float(axis[-1])!r},{axis.size}\n")
    buf.write("v,a,theta,fuel_rate,feasible\n")
    columns = (V.ravel().tolist(), A.ravel().tolist(), TH.ravel().tolist(), fuel.ravel().tolist(),
               feasible.ravel().astype(int).tolist())
    for v_, a_, t_, f_, ok in zip(*columns):
        # Node coordinates are informative only (the loader rebuilds them from
        # the axis lines), so they are printed compactly; fuel rates exactly.
        buf.write(f"{v_:.12g},{a_:.12g},{t_:.12g},{f_!r},{ok}\n")
    atomic_write_text(path, buf.getvalue())


def export_grid(model, path, axis_overrides=None):
    """Tabulate ``model`` and write the dump; returns the written :class:`GridModel`."""
    axes = axes_from_overrides(axis_overrides)
    fuel, feasible = tabulate(model, axes)
    write_grid(path, axes, fuel, feasible)
    return GridModel(axes, fuel, feasible)


def _read_csv(path):
    axes = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    row = 0
    while row < len(lines) and lines[row].startswith("#"):
        parts = lines[row][1:].strip().split(",")
        if len(parts) != 5 or parts[0] != "axis" or parts[1] not in AXIS_NAMES:
            raise ParseError(f"bad axis declaration {lines[row]!r}", 0)
        try:
            axes[parts[1]] = np.linspace(float(parts[2]), float(parts[3]), int(parts[4]))
        except ValueError:
            raise ParseError(f"bad axis declaration {lines[row]!r}", 0) from None
        row += 1
    if set(axes) != set(AXIS_NAMES):
        raise ParseError("grid dump must declare axes v, a and theta", 0)
    if row >= len(lines) or lines[row].strip() != "v,a,theta,fuel_rate,feasible":
        raise ParseError("expected header v,a,theta,fuel_rate,feasible", 0)
    axes = tuple(axes[name] for name in AXIS_NAMES)
    shape = tuple(ax.size for ax in axes)
    body = lines[row + 1:]
    if len(body) != int(np.prod(shape)):
        raise ParseError(f"expected {int(np.prod(shape))} data rows, found {len(body)}",
                         len(body))
    try:
        data = np.loadtxt(body, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ParseError(f"malformed data row ({exc})") from None
    return axes, data[:, 3].reshape(shape), data[:, 4].reshape(shape) != 0


def load_grid(path):
    """Load a dump written by :func:`write_grid`."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"grid dump not found: {path}")
    if path.suffix == ".npz":
        with np.load(path) as data:
            axes = (data["v"], data["a"], data["theta"])
            return GridModel(axes, data["fuel_rate"], data["feasible"] != 0)
    return GridModel(*_read_csv(path))


@dataclass(eq=False)
class GridModel:
    """Trilinear interpolation of a tabulated fuel model.

    Calling it returns ``(fuel_rate, feasible)``; a point counts as feasible
    when the interpolated indicator is at least 0.5. Queries outside the
    grid are clamped and tallied in ``diagnostics``.
    """

    axes: tuple
    fuel: np.ndarray
    feasible: np.ndarray

    thread_safe = True

    def __post_init__(self):
        self.axes = tuple(np.asarray(ax, dtype=float) for ax in self.axes)
        shape = tuple(ax.size for ax in self.axes)
        self.fuel = np.asarray(self.fuel, dtype=float)
        self.feasible = np.asarray(self.feasible, dtype=bool)
        if self.fuel.shape != shape or self.feasible.shape != shape:
            raise ConfigurationError(f"grid values have shape {self.fuel.shape}, axes {shape}")
        for ax in self.axes:
            if ax.size < 2 or not np.all(np.diff(ax) > 0):
                raise ConfigurationError("grid axes must be strictly increasing with >= 2 nodes")
        self._indicator = self.feasible.astype(float)
        self.diagnostics = ExtrapolationCounter()

    @staticmethod
    def _weights(axis, q):
        qc = np.clip(q, axis[0], axis[-1])
        i = np.clip(np.searchsorted(axis, qc, side="right") - 1, 0, axis.size - 2)
        return i, (qc - axis[i]) / (axis[i + 1] - axis[i])

    def _locate(self, v, a, theta):
        """Cell indices and fractions per axis; out-of-grid points are clamped and counted."""
        query = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (v, a, theta)))
        outside = np.zeros(query[0].shape, dtype=bool)
        for ax, q in zip(self.axes, query):
            outside |= (q < ax[0]) | (q > ax[-1])
        self.diagnostics.add(int(np.count_nonzero(outside)))
        return [self._weights(ax, q) for ax, q in zip(self.axes, query)]

    @staticmethod
    def _blend(table, cells):
        (i, s), (j, t), (k, u) = cells
        out = np.zeros(np.shape(s))
        for di, ws in ((0, 1 - s), (1, s)):
            for dj, wt in ((0, 1 - t), (1, t)):
                for dk, wu in ((0, 1 - u), (1, u)):
                    out = out + ws * wt * wu * table[i + di, j + dj, k + dk]
        return out

    def interpolate(self, table, v, a, theta):
        return self._blend(table, self._locate(v, a, theta))

    def __call__(self, v, a, theta=0.0):
        cells = self._locate(v, a, theta)
        fuel = self._blend(self.fuel, cells)
        feasible = self._blend(self._indicator, cells) >= 0.5
        return fuel, feasible

"""Instantaneous gear-resolved fuel model.

For every gear the model computes the wheel force the requested motion
needs, maps it to an engine operating point through the fitted maps, reads
the fuel rate, and scores the gear by fuel plus weighted penalties for
exceeding engine speed, engine torque or wheel force limits and for being in
a higher gear than the reference shift schedule would pick. The cheapest
gear wins. Braking points take the braking downshift gear instead, and the
idle point ``v = a = 0`` returns the tuned idle operating condition.

All evaluation is vectorized over points; :func:`eval` and
:func:`eval_manual` are one-point views of :func:`evaluate`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError, MapDomainError, UnsupportedOperationError
from .maps import ExtrapolationCounter
from .vehicle import Transmission


@dataclass(frozen=True)
class SemiOutput:
    N: float  # rad/s
    T: float  # Nm
    fuel_rate: float  # g/s
    N_output: float  # rad/s
    F_wheel: float  # N
    P_wheel: float  # W
    P_engine: float  # W
    gear: int
    feasible: bool
    penalty: float  # weighted engine penalty at the chosen gear


_OUTPUT_FIELDS = ("N", "T", "fuel_rate", "N_output", "F_wheel", "P_wheel", "P_engine", "gear",
                  "feasible", "penalty")


@dataclass(frozen=True)
class SemiBatch:
    """Element-wise outputs of :func:`evaluate`, plus the per-call extrapolation tally."""

    N: np.ndarray
    T: np.ndarray
    fuel_rate: np.ndarray
    N_output: np.ndarray
    F_wheel: np.ndarray
    P_wheel: np.ndarray
    P_engine: np.ndarray
    gear: np.ndarray
    feasible: np.ndarray
    penalty: np.ndarray
    extrapolations: int = 0

    def __len__(self):
        return len(self.fuel_rate)

    def __getitem__(self, idx):
        values = [getattr(self, name)[idx] for name in _OUTPUT_FIELDS]
        return SemiOutput(*(float(x) for x in values[:7]), int(values[7]), bool(values[8]),
                          float(values[9]))


@dataclass(frozen=True)
class GearTable:
    """Per-gear intermediate quantities, arrays of shape ``(n_gears, n_points)``."""

    F_wheel: np.ndarray  # commanded wheel force
    F_map: np.ndarray  # wheel force fed to the engine maps (first gear clamped)
    N_output_map: np.ndarray
    alpha: np.ndarray
    reference_gear: np.ndarray
    F_wmax: np.ndarray
    N: np.ndarray
    T: np.ndarray
    T_max: np.ndarray
    fuel: np.ndarray
    fuel_cut: np.ndarray
    N_penalty: np.ndarray
    T_penalty: np.ndarray
    F_penalty: np.ndarray
    engine_penalty: np.ndarray


def wheel_force(vehicle, gear, v, a, theta=0.0):
    """Force at the wheels (N) needed for speed ``v``, acceleration ``a`` and grade ``theta``."""
    c = vehicle.constants
    if not 1 <= int(gear) <= c.n_gears:
        raise InputError(f"gear {gear} outside 1..{c.n_gears}")
    v = np.asarray(v, dtype=float)
    return (c.m_general[int(gear) - 1] * a + c.R_a * v**2 + c.R_r * v + c.R_g
            + c.m_vehicle * np.sin(theta) * c.g_const)


def _inputs(v, a, theta):
    v, a, theta = np.broadcast_arrays(np.atleast_1d(np.asarray(v, dtype=float)),
                                      np.atleast_1d(np.asarray(a, dtype=float)),
                                      np.atleast_1d(np.asarray(theta, dtype=float)))
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(a)) and np.all(np.isfinite(theta))):
        raise InputError("non-finite speed, acceleration or grade")
    if np.any(v < 0):
        raise InputError("the gear-resolved model is defined for v >= 0 only")
    return v.ravel(), a.ravel(), theta.ravel()


def gear_table(vehicle, v, a, theta, counter=None):
    """Evaluate every gear at every point."""
    c, e, pm, em = vehicle.constants, vehicle.empirical, vehicle.pmaps, vehicle.emaps
    G = c.n_gears
    gears = np.arange(1, G + 1)[:, None]
    m_general = np.asarray(c.m_general)[:, None]
    g_r = np.asarray(c.g_r)[:, None]

    n_out = c.d_r * v / c.r_tire
    F = (m_general * a + c.R_a * v**2 + c.R_r * v + c.R_g
         + c.m_vehicle * np.sin(theta) * c.g_const)
    tw_max = pm.T_wmax_of_v(v, counter)
    if np.any(tw_max == 0):
        raise MapDomainError("pedal angle undefined: maximum wheel torque is zero")
    alpha = F * c.r_tire / tw_max
    reference = pm.K_upshift(alpha, np.broadcast_to(v, alpha.shape), counter)
    F_wmax = pm.T_wmax_of_v_k(np.broadcast_to(v, F.shape), gears, counter) / c.r_tire

    # The open torque converter in first gear: clamp inputs before map lookup.
    n_map = np.repeat(n_out[None, :], G, axis=0)
    F_map = F.copy()
    n_map[0] = np.minimum(n_out, c.N_max / g_r[0, 0])
    F_map[0] = np.minimum(F[0], F_wmax[0])

    N = np.empty_like(F)
    T = np.empty_like(F)
    for k in range(G):
        N[k] = em.engine_speed[k](n_map[k], F_map[k])
        T[k] = em.engine_torque[k](n_map[k], F_map[k])
    N = np.maximum(c.N_min, N)
    T = np.maximum(e.T_min, T)
    T[0] = T[0] + e.torque_correction(np.maximum(a, 0.0))
    T_max = pm.T_max_of_N(N, counter)

    fuel = np.maximum(0.0, em.fuel_poly(N, T))
    cut = (v > e.v_c) & (F_map < e.F_wc)
    fuel = np.where(cut, 0.0, fuel)

    zero = np.zeros_like(F)
    N_pen = np.where(~cut & (N > c.N_max), N - c.N_max, zero)
    T_pen = np.where(~cut & (T > T_max), T - T_max, zero)
    F_pen = np.where(~cut & (F_map > F_wmax), F_map - F_wmax, zero)
    w = vehicle.weights
    engine_pen = w.w_T * T_pen + w.w_N * N_pen + w.w_F * F_pen
    return GearTable(F, F_map, n_map, alpha, reference, F_wmax, N, T, T_max, fuel, cut,
                     N_pen, T_pen, F_pen, engine_pen)


def automatic_gear_penalty(table):
    G = table.fuel.shape[0]
    gears = np.arange(1, G + 1)[:, None]
    flagged = (gears > 1) & (table.reference_gear < gears) & ~table.fuel_cut
    return np.where(flagged, gears - table.reference_gear, 0).astype(float)


def manual_gear_penalty(vehicle, table, v, counter=None):
    G = table.fuel.shape[0]
    gears = np.broadcast_to(np.arange(1, G + 1)[:, None], table.alpha.shape)
    v_up = vehicle.pmaps.V_upshift(table.alpha, gears, counter)
    flagged = (v < v_up) & ~table.fuel_cut
    return np.where(flagged, vehicle.weights.c_m * (v_up - v), 0.0)


def _assemble(vehicle, table, v, a, gear_index, counter):
    c, e = vehicle.constants, vehicle.empirical
    cols = np.arange(v.size)
    pick = lambda arr: arr[gear_index, cols]
    N, T, fuel = pick(table.N), pick(table.T), pick(table.fuel)
    F = pick(table.F_wheel)
    penalty = pick(table.engine_penalty)

    idle = (v == 0) & (a == 0)
    N = np.where(idle, c.N_min, N)
    T = np.where(idle, e.T_min, T)
    fuel = np.where(idle, e.f_idle, fuel)
    penalty = np.where(idle, 0.0, penalty)
    gear = np.where(idle, 1, gear_index + 1)
    F = np.where(idle, table.F_wheel[0], F)
    n_out = c.d_r * v / c.r_tire
    return SemiBatch(N=N, T=T, fuel_rate=fuel, N_output=n_out, F_wheel=F, P_wheel=F * v,
                     P_engine=N * T, gear=gear.astype(np.int64), feasible=penalty == 0,
                     penalty=penalty, extrapolations=counter.value)


def evaluate(vehicle, v, a, theta=0.0, diagnostics=None):
    """Vectorized automatic-transmission evaluation.

    ``diagnostics``, if given, is an :class:`ExtrapolationCounter` that
    receives this call's count of clamped map lookups.
    """
    v, a, theta = _inputs(v, a, theta)
    counter = ExtrapolationCounter()
    table = gear_table(vehicle, v, a, theta, counter)
    w = vehicle.weights
    objective = table.fuel + table.engine_penalty + w.w_g * automatic_gear_penalty(table)
    chosen = np.argmin(objective, axis=0)
    braking = table.F_wheel[chosen, np.arange(v.size)] < 0
    chosen = np.where(braking, vehicle.empirical.downshift_gear(v) - 1, chosen)
    out = _assemble(vehicle, table, v, a, chosen, counter)
    if diagnostics is not None:
        diagnostics.merge(counter)
    return out


def reverse_downshift_gear(vehicle, alpha, v, counter=None):
    """Highest gear whose manual downshift speed at pedal ``alpha`` is at or below ``v``."""
    alpha = np.asarray(alpha, dtype=float)
    v = np.asarray(v, dtype=float)
    gear = np.ones(np.broadcast(alpha, v).shape, dtype=np.int64)
    for k in range(2, vehicle.n_gears + 1):
        v_down = vehicle.pmaps.V_downshift(alpha, k, counter)
        gear = np.where(v_down <= v, k, gear)
    return gear


def evaluate_manual(vehicle, v, a, theta=0.0, diagnostics=None):
    """Vectorized manual-transmission evaluation.

    The gear penalty grows with the shortfall of ``v`` below the upshift
    speed into each gear. When the winning gear's pedal angle is below the
    flat-shift threshold ``alpha_s``, the gear is read back from the
    downshift map instead; negative pedal angles (braking) always take that
    branch.
    """
    if not vehicle.pmaps.has_manual_maps:
        raise UnsupportedOperationError(f"{vehicle.name}: no manual shift maps")
    v, a, theta = _inputs(v, a, theta)
    counter = ExtrapolationCounter()
    table = gear_table(vehicle, v, a, theta, counter)
    objective = table.fuel + table.engine_penalty + manual_gear_penalty(vehicle, table, v, counter)
    chosen = np.argmin(objective, axis=0)
    cols = np.arange(v.size)
    alpha_opt = table.alpha[chosen, cols]
    flat = alpha_opt < vehicle.pmaps.alpha_s
    chosen = np.where(flat, reverse_downshift_gear(vehicle, alpha_opt, v, counter) - 1, chosen)
    out = _assemble(vehicle, table, v, a, chosen, counter)
    if diagnostics is not None:
        diagnostics.merge(counter)
    return out


def evaluate_any(vehicle, v, a, theta=0.0, diagnostics=None):
    """Dispatch on the vehicle's transmission type."""
    if vehicle.transmission is Transmission.MANUAL:
        return evaluate_manual(vehicle, v, a, theta, diagnostics)
    return evaluate(vehicle, v, a, theta, diagnostics)


def eval(vehicle, pt, diagnostics=None):
    """Automatic-transmission output at one operating point."""
    pt.check_finite()
    return evaluate(vehicle, pt.v, pt.a, pt.theta, diagnostics)[0]


def eval_manual(vehicle, pt, diagnostics=None):
    """Manual-transmission output at one operating point."""
    pt.check_finite()
    return evaluate_manual(vehicle, pt.v, pt.a, pt.theta, diagnostics)[0]


class SemiPrincipledModel:
    """Oracle adapter: ``model(v, a, theta) -> (fuel_rate, feasible)`` on arrays."""

    thread_safe = True

    def __init__(self, vehicle):
        self.vehicle = vehicle
        self.diagnostics = ExtrapolationCounter()

    def __call__(self, v, a, theta=0.0):
        shape = np.broadcast(np.asarray(v), np.asarray(a), np.asarray(theta)).shape
        out = evaluate_any(self.vehicle, v, a, theta, self.diagnostics)
        return out.fuel_rate.reshape(shape), out.feasible.reshape(shape)

    def fuel_rate(self, pt):
        return float(self(pt.v, pt.a, pt.theta)[0])

    def __repr__(self):
        return f"SemiPrincipledModel({self.vehicle.name!r})"

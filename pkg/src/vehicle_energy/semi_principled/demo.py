"""A synthetic but physically plausible vehicle for examples and tests.

Every map is generated from a small closed-form engine description (a
torque curve, shift speeds expressed as engine speeds, fixed efficiency
factors), so the vehicle exercises every branch of the model without
depending on proprietary data.
"""

from __future__ import annotations

import numpy as np

from .maps import GearGrid, GearLookup, Grid1D, LinearForm, TensorPoly, TwoFacetSurface
from .vehicle import (
    EmpiricalConstants,
    EmpiricalMaps,
    PrincipledConstants,
    PrincipledMaps,
    SemiPrincipledVehicle,
    Transmission,
)

N_MAX = 620.0  # rad/s
N_MIN = 80.0  # rad/s
ALPHA_S = 0.3


def engine_torque_curve(N):
    """Full-load torque (Nm) of the demo engine."""
    N = np.asarray(N, dtype=float)
    return 130.0 + 70.0 * (1.0 - ((N - 350.0) / 350.0) ** 2)


def demo_constants(n_gears=4):
    ratios = np.geomspace(3.2, 0.8, n_gears)
    inertia = 120.0 / np.arange(1, n_gears + 1)
    return PrincipledConstants(
        m_vehicle=1500.0, m_general=tuple(1500.0 + inertia), r_tire=0.32, R_a=0.42, R_r=1.5,
        R_g=130.0, d_r=3.6, g_r=tuple(ratios), N_max=N_MAX, N_min=N_MIN)


def _engine_speed(c, v, k):
    return c.g_r[k - 1] * c.d_r * np.asarray(v, dtype=float) / c.r_tire


def _speed_at(c, N, k):
    return N * c.r_tire / (c.g_r[k - 1] * c.d_r)


def demo_principled_maps(c):
    G = c.n_gears
    v_axis = np.arange(0.0, 40.5, 0.5)
    per_gear = np.empty((v_axis.size, G))
    for k in range(1, G + 1):
        N = _engine_speed(c, v_axis, k)
        full = engine_torque_curve(np.clip(N, c.N_min, c.N_max)) * c.g_r[k - 1] * c.d_r * 0.9
        over = np.clip(1.0 - (N - c.N_max) / 100.0, 0.05, 1.0)
        per_gear[:, k - 1] = full * over

    alpha_axis = np.linspace(0.0, 1.0, 11)
    lookup_v = np.arange(0.0, 41.0, 1.0)
    threshold = 180.0 + 220.0 * alpha_axis
    gear = np.ones((alpha_axis.size, lookup_v.size), dtype=int)
    for k in range(2, G + 1):
        reaches = _engine_speed(c, lookup_v, k)[None, :] >= threshold[:, None]
        gear = np.where(reaches, k, gear)

    shift_up = 250.0 + 250.0 * np.maximum(alpha_axis, ALPHA_S)
    shift_down = 120.0 + 150.0 * np.maximum(alpha_axis, ALPHA_S)
    v_up = np.zeros((alpha_axis.size, G))
    v_down = np.zeros((alpha_axis.size, G))
    for k in range(2, G + 1):
        v_up[:, k - 1] = _speed_at(c, shift_up, k - 1)
        v_down[:, k - 1] = _speed_at(c, shift_down, k)

    N_axis = np.linspace(0.0, 700.0, 36)
    return PrincipledMaps(
        K_upshift=GearLookup(alpha_axis, lookup_v, gear),
        T_max_of_N=Grid1D(N_axis, engine_torque_curve(N_axis), "T_max_of_N"),
        T_wmax_of_v=Grid1D(v_axis, per_gear.max(axis=1), "T_wmax_of_v"),
        T_wmax_of_v_k=GearGrid(v_axis, per_gear, "T_wmax_of_v_k"),
        V_upshift=GearGrid(alpha_axis, v_up, "V_upshift"),
        V_downshift=GearGrid(alpha_axis, v_down, "V_downshift"),
        alpha_s=ALPHA_S)


def demo_fuel_poly():
    coef = np.zeros((3, 4))
    coef[0, 0], coef[1, 0], coef[2, 0] = 0.08, 3e-4, 2e-7
    coef[0, 1], coef[1, 1], coef[2, 1] = 2e-4, 6.5e-5, 1e-8
    coef[0, 2], coef[1, 2] = 1e-6, 2e-8
    coef[0, 3] = 1e-9
    return TensorPoly(coef)


def demo_empirical_maps(c):
    g1 = c.g_r[0]
    speed1 = np.zeros((4, 3))
    speed1[0, 0], speed1[1, 0], speed1[3, 0] = 100.0, 0.85 * g1, 1e-8
    speed1[0, 1], speed1[1, 1], speed1[0, 2] = 4e-3, 1e-5, 2e-7
    torque_scale = c.r_tire / (g1 * c.d_r * 0.9)
    torque1 = TwoFacetSurface.hinge((8.0, 0.0, torque_scale), 4e-3, (0.5, 1.0), 2500.0)
    speed = [TensorPoly(speed1)]
    torque = [torque1]
    for k in range(2, c.n_gears + 1):
        g = c.g_r[k - 1]
        speed.append(LinearForm((0.0, g)))
        torque.append(LinearForm((5.0, 0.01, c.r_tire / (g * c.d_r * 0.93))))
    return EmpiricalMaps(demo_fuel_poly(), tuple(speed), tuple(torque))


def demo_empirical_constants(c):
    downshift = tuple(_speed_at(c, 110.0, k) for k in range(2, c.n_gears + 1))
    return EmpiricalConstants(T_min=12.0, f_idle=0.22, v_c=4.5, F_wc=-150.0,
                              downshift_speeds=downshift, torque_correction_slope=25.0)


def demo_vehicle(n_gears=4, transmission=Transmission.AUTOMATIC, name=None):
    """Synthetic ``n_gears``-speed vehicle with automatic and manual shift maps."""
    c = demo_constants(n_gears)
    return SemiPrincipledVehicle(
        name=name or f"demo {n_gears}-speed", constants=c,
        empirical=demo_empirical_constants(c), pmaps=demo_principled_maps(c),
        emaps=demo_empirical_maps(c), transmission=transmission)

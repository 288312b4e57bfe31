"""Straight-line scalar reimplementation of the gear-resolved model's gear choice.

Only the vehicle's raw data (constants, table arrays, polynomial
coefficients) is read; every interpolation, polynomial and penalty is
recomputed here with plain Python floats.
"""

import bisect
import math


def interp(xs, ys, q):
    xs, ys = list(xs), list(ys)
    if q <= xs[0]:
        return ys[0]
    if q >= xs[-1]:
        return ys[-1]
    i = bisect.bisect_right(xs, q) - 1
    t = (q - xs[i]) / (xs[i + 1] - xs[i])
    return (1 - t) * ys[i] + t * ys[i + 1]


def lower_cell(axis, q):
    return min(max(bisect.bisect_right(list(axis), q) - 1, 0), len(axis) - 1)


def poly2(coef, x, y):
    total = 0.0
    for i, row in enumerate(coef):
        for j, c in enumerate(row):
            total += c * x**i * y**j
    return total


def apply_form(form, x, y):
    kind = type(form).__name__
    if kind == "TensorPoly":
        return poly2(form.coef.tolist(), x, y)
    if kind == "LinearForm":
        c = form.coef
        return c[0] + c[1] * x + (c[2] * y if len(c) == 3 else 0.0)
    lo, hi, n, off = form.lower, form.upper, form.normal, form.offset
    plane = hi if n[0] * x + n[1] * y > off else lo
    return plane[0] + plane[1] * x + plane[2] * y


def gear_rows(veh, v, a, theta):
    """Per-gear dictionaries with every quantity entering the objective."""
    c, e, pm, em, w = veh.constants, veh.empirical, veh.pmaps, veh.emaps, veh.weights
    rows = []
    tw_max = interp(pm.T_wmax_of_v.x, pm.T_wmax_of_v.y, v)
    n_out = c.d_r * v / c.r_tire
    for k in range(1, c.n_gears + 1):
        F = (c.m_general[k - 1] * a + c.R_a * v * v + c.R_r * v + c.R_g
             + c.m_vehicle * math.sin(theta) * c.g_const)
        alpha = F * c.r_tire / tw_max
        ref = int(pm.K_upshift.gear[lower_cell(pm.K_upshift.alpha, alpha),
                                    lower_cell(pm.K_upshift.v, v)])
        F_max = interp(pm.T_wmax_of_v_k.x, pm.T_wmax_of_v_k.values[:, k - 1], v) / c.r_tire
        n_in, F_in = n_out, F
        if k == 1:
            n_in = min(n_out, c.N_max / c.g_r[0])
            F_in = min(F, F_max)
        N = max(c.N_min, apply_form(em.engine_speed[k - 1], n_in, F_in))
        T = max(e.T_min, apply_form(em.engine_torque[k - 1], n_in, F_in))
        if k == 1:
            T += e.torque_correction_slope * max(a, 0.0)
        T_max = interp(pm.T_max_of_N.x, pm.T_max_of_N.y, N)
        fuel = max(0.0, poly2(em.fuel_poly.coef.tolist(), N, T))
        cut = v > e.v_c and F_in < e.F_wc
        if cut:
            fuel = 0.0
        N_pen = 0.0 if cut else max(0.0, N - c.N_max)
        T_pen = 0.0 if cut else max(0.0, T - T_max)
        F_pen = 0.0 if cut else max(0.0, F_in - F_max)
        engine = w.w_T * T_pen + w.w_N * N_pen + w.w_F * F_pen
        g_pen = float(k - ref) if (k > 1 and ref < k and not cut) else 0.0
        manual = 0.0
        if pm.has_manual_maps:
            v_up = interp(pm.V_upshift.x, pm.V_upshift.values[:, k - 1], alpha)
            if v < v_up and not cut:
                manual = w.c_m * (v_up - v)
        rows.append({"gear": k, "F": F, "alpha": alpha, "fuel": fuel, "engine": engine,
                     "auto": fuel + engine + w.w_g * g_pen, "manual": fuel + engine + manual})
    return rows


def first_min(rows, key):
    best = rows[0]
    for r in rows[1:]:
        if r[key] < best[key]:
            best = r
    return best


def automatic_choice(veh, v, a, theta):
    """(gear, braking, feasible) by exhaustive scan of the automatic objective."""
    rows = gear_rows(veh, v, a, theta)
    best = first_min(rows, "auto")
    return best["gear"], best["F"] < 0, best["engine"] == 0


def manual_choice(veh, v, a, theta):
    rows = gear_rows(veh, v, a, theta)
    best = first_min(rows, "manual")
    pm = veh.pmaps
    if best["alpha"] >= pm.alpha_s:
        return best["gear"]
    gear = 1
    for k in range(2, veh.constants.n_gears + 1):
        if interp(pm.V_downshift.x, pm.V_downshift.values[:, k - 1], best["alpha"]) <= v:
            gear = k
    return gear

import logging
from dataclasses import replace

import numpy as np
import pytest

from vehicle_energy import FitError, InputError, ParseError
from vehicle_energy.map_fitting import (
    DownshiftEvent,
    DriveTrace,
    SteadyStateMapOracle,
    TcState,
    VcdSample,
    detect_downshifts,
    extract_empirical_constants,
    fit_empirical_maps,
    fit_fuel_map,
    fit_linear,
    fit_tensor_poly,
    fit_two_facet,
    generate_vcd_schedule,
    pedal_sequence,
    read_drive_trace,
    read_vcd_samples,
    run_vcd,
    write_drive_trace,
    write_vcd_samples,
)
from vehicle_energy.semi_principled import LinearForm, TwoFacetSurface, demo_vehicle


def one_gear_constants(**changes):
    c = demo_vehicle(1).constants
    base = {"N_min": 80.0, "N_max": 600.0, "r_tire": 0.3, "g_r": (1.0,), "d_r": 4.0}
    base.update(changes)
    return replace(c, **base)


class TestSchedule:
    def test_speed_range_and_cap(self):
        sched = generate_vcd_schedule(one_gear_constants())
        assert sched.bounds[1] == (pytest.approx(6.0), 34.0)
        speeds = sorted({e.target_speed for e in sched.entries})
        assert speeds[0] == pytest.approx(6.0) and speeds[-1] == pytest.approx(34.0)
        assert len(speeds) == 281
        assert len(sched) == 281 * 51

    def test_pedal_steps(self):
        pedals = pedal_sequence()
        assert len(pedals) == 51 and pedals[0] == 0.0 and pedals[-1] == 1.0
        first = generate_vcd_schedule(one_gear_constants()).entries[:51]
        assert [e.pedal for e in first] == list(pedals)
        assert all(e.dwell_s == 10 and e.capture_at_s == 8 for e in first)

    def test_empty_gear_warns(self, caplog):
        c = one_gear_constants(N_min=700.0, N_max=800.0, r_tire=0.3, g_r=(1.0,), d_r=4.0)
        with caplog.at_level(logging.WARNING):
            sched = generate_vcd_schedule(c)
        assert len(sched) == 0
        assert "exceeds" in caplog.text

    def test_gear_subset(self):
        sched = generate_vcd_schedule(demo_vehicle().constants, gears=2)
        assert {e.gear for e in sched.entries} == {1, 2}


class TestFits:
    def test_exact_polynomial_recovered(self):
        rng = np.random.default_rng(0)
        x, y = rng.uniform(80, 600, 400), rng.uniform(0, 300, 400)
        coef = rng.normal(size=(3, 4)) * 1e-3
        z = sum(coef[i, j] * x**i * y**j for i in range(3) for j in range(4))
        fit = fit_tensor_poly(x, y, z, (2, 3))
        # Raw monomial coefficients are ill-conditioned at these scales; the surface is not.
        np.testing.assert_allclose(fit.map(x, y), z, rtol=1e-9, atol=1e-9 * np.abs(z).max())
        np.testing.assert_allclose(fit.map.coef[1:], coef[1:], rtol=1e-3)
        assert fit.rms < 1e-9 * np.abs(z).max()

    def test_constant_data(self):
        x, y = np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5))
        fit = fit_tensor_poly(x, y, np.full(x.shape, 3.0), (2, 3))
        assert fit.map(0.3, 0.7) == pytest.approx(3.0)

    def test_noisy_fit_solves_normal_equations(self):
        rng = np.random.default_rng(1)
        x, y = rng.uniform(100, 500, 300), rng.uniform(-50, 250, 300)
        z = rng.normal(size=300)
        fit = fit_tensor_poly(x, y, z, (3, 4))
        design = np.column_stack([x**i * y**j for i in range(4) for j in range(5)])
        resid = z - fit.map(x, y)
        # Residual orthogonal to every basis column (scaled for conditioning).
        ortho = (design / np.linalg.norm(design, axis=0)).T @ resid
        assert np.max(np.abs(ortho)) < 1e-8

    def test_rank_deficient_design_names_terms(self):
        x = np.linspace(0, 1, 20)
        with pytest.raises(FitError, match="rank-deficient"):
            fit_tensor_poly(x, np.zeros(20), x, (1, 1))

    def test_locked_gear_speed_slope(self):
        n_out = np.linspace(10, 100, 30)
        fit = fit_linear(n_out, 2.5 * n_out)
        assert fit.map.coef == pytest.approx((0.0, 2.5), abs=1e-10)

    def test_two_facet_reduces_to_plane_on_planar_data(self):
        rng = np.random.default_rng(2)
        x, y = rng.uniform(0, 50, 200), rng.uniform(0, 4000, 200)
        z = 3 + 0.2 * x + 0.05 * y
        fit = fit_two_facet(x, y, z)
        assert fit.rms < 1e-9
        np.testing.assert_allclose(fit.map(x, y), z, atol=1e-8)

    def test_two_facet_recovers_hinge(self):
        rng = np.random.default_rng(3)
        x, y = rng.uniform(0, 50, 600), rng.uniform(0, 4000, 600)
        truth = TwoFacetSurface.hinge((10, 0.5, 0.03), 0.04, (1.0, -0.01), -10.0)
        z = truth(x, y)
        fit = fit_two_facet(x, y, z)
        plane = fit_linear(x, z, y)
        assert fit.converged
        assert fit.rms <= plane.rms
        assert fit.rms < 1e-8 * np.abs(z).max()

    def test_two_facet_never_worse_than_plane(self):
        rng = np.random.default_rng(4)
        x, y = rng.uniform(0, 1, 100), rng.uniform(0, 1, 100)
        z = rng.normal(size=100)
        assert fit_two_facet(x, y, z).rms <= fit_linear(x, z, y).rms + 1e-12

    def test_round_trip_through_vcd(self, tmp_path):
        veh = demo_vehicle(3)
        sched = generate_vcd_schedule(veh.constants)
        samples = run_vcd(replace(sched, entries=sched.entries[::7]), SteadyStateMapOracle(veh))
        write_vcd_samples(samples, tmp_path / "s.csv")
        assert read_vcd_samples(tmp_path / "s.csv") == samples
        maps, report = fit_empirical_maps(samples)
        np.testing.assert_allclose(maps.fuel_poly.coef, veh.emaps.fuel_poly.coef,
                                   rtol=1e-8, atol=1e-12)
        for k in (1, 2):
            assert maps.engine_speed[k].coef == pytest.approx(veh.emaps.engine_speed[k].coef)
        assert report.torque[0].converged
        assert report.to_dict()["fuel_rms"] < 1e-9

    def test_missing_gear(self):
        s = VcdSample(2, 5.0, 0.1, 100.0, 20.0, 1.0, 50.0, 100.0, True)
        with pytest.raises(FitError, match="gears"):
            fit_empirical_maps([s] * 30)

    def test_fuel_needs_samples(self):
        with pytest.raises(FitError):
            fit_fuel_map([])


def make_trace(v, gear=None, T=None, fuel=None, F=None, state=TcState.LOCKED, dt=0.1):
    n = len(v)
    return DriveTrace(
        t=np.arange(n) * dt, v=np.asarray(v, dtype=float),
        gear=np.ones(n, dtype=int) if gear is None else np.asarray(gear),
        N=np.full(n, 100.0), T=np.full(n, 12.0) if T is None else np.asarray(T, dtype=float),
        fuel=np.full(n, 1.0) if fuel is None else np.asarray(fuel, dtype=float),
        F_wheel=np.full(n, 100.0) if F is None else np.asarray(F, dtype=float),
        tc_state=(state,) * n)


class TestExtraction:
    def test_idle(self):
        n = 60
        trace = make_trace(np.zeros(n), T=np.full(n, 15.0), fuel=np.full(n, 0.3))
        out = extract_empirical_constants(trace)
        assert out.T_min == 15.0 and out.f_idle == pytest.approx(0.3)
        assert out.v_c is None and out.diagnostics

    def test_idle_excludes_torque_transients(self):
        T = np.full(60, 15.0)
        T[40:] = 40.0
        trace = make_trace(np.zeros(60), T=T, fuel=np.where(np.arange(60) < 40, 0.3, 0.9))
        out = extract_empirical_constants(trace)
        # The step at sample 40 disturbs the torque rate at samples 39 and 40, which
        # removes samples 29..50 (one second either side); 29 remain before, 9 after.
        assert out.T_min == 15.0
        assert out.f_idle == pytest.approx((29 * 0.3 + 9 * 0.9) / 38)

    def test_coast_cut(self):
        v = np.arange(20.0, 5.0, -1.0)
        F = np.linspace(-300, -100, 15)
        trace = make_trace(v, fuel=np.zeros(15), F=F)
        out = extract_empirical_constants(trace)
        assert out.v_c == 6.0  # nearest rank: ceil(0.01 * 15) = 1st smallest
        assert out.F_wc == F[14]  # ceil(0.95 * 15) = 15th smallest

    def test_coast_cut_rank_on_larger_set(self):
        v = np.linspace(20, 6, 141)
        out = extract_empirical_constants(make_trace(v, fuel=np.zeros(141), F=-np.ones(141)))
        assert out.v_c == pytest.approx(6.1)  # ceil(1.41) = 2nd smallest

    def test_downshift_median(self):
        events = [DownshiftEvent(3, s) for s in (4.0, 5.0, 6.0)]
        out = extract_empirical_constants(make_trace(np.ones(5)), downshift_events=events)
        assert out.downshift_speeds == {3: 5.0}

    def test_detect_downshifts(self):
        gear = [3, 3, 2, 2, 1, 2, 1]
        F = [-1, -1, -1, 5, 5, -1, -1]
        trace = make_trace(np.arange(7.0), gear=gear, F=F)
        assert detect_downshifts(trace) == [DownshiftEvent(3, 2.0), DownshiftEvent(2, 6.0)]

    def test_torque_correction_slope(self):
        veh = demo_vehicle()
        c = veh.constants
        a = np.concatenate([np.full(50, 0.5), np.full(50, 3.0)])
        v = 1.0 + np.concatenate([[0.0], np.cumsum(a[:-1] * 0.1)])
        F = np.full(100, 800.0)
        n_out = c.d_r * v / c.r_tire
        from vehicle_energy.numerics import time_derivative

        a_num = time_derivative(np.arange(100) * 0.1, v)
        T = veh.emaps.engine_torque[0](n_out, F) + 25.0 * a_num
        trace = make_trace(v, T=T, F=F, state=TcState.OPEN_STEADY)
        out = extract_empirical_constants(trace, c, veh.emaps.engine_torque[0])
        assert out.torque_correction_slope == pytest.approx(25.0)

    def test_incomplete_constants_rejected(self):
        out = extract_empirical_constants(make_trace(np.zeros(20)))
        with pytest.raises(Exception, match="incomplete"):
            out.to_empirical_constants(4)


class TestTraceFiles:
    def test_round_trip(self, tmp_path):
        trace = make_trace(np.linspace(0, 3, 10), fuel=np.linspace(0, 1, 10))
        write_drive_trace(trace, tmp_path / "t.csv")
        back = read_drive_trace(tmp_path / "t.csv")
        for name in ("t", "v", "N", "T", "fuel", "F_wheel", "gear"):
            np.testing.assert_array_equal(getattr(back, name), getattr(trace, name))
        assert back.tc_state == trace.tc_state

    def test_unknown_state(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("t,v,gear,N,T,fuel,F_wheel,tc_state\n0,0,1,80,12,0.2,0,slipping\n")
        with pytest.raises(ParseError) as err:
            read_drive_trace(path)
        assert err.value.row == 1

    def test_time_not_increasing(self, tmp_path):
        path = tmp_path / "t.csv"
        rows = "".join(f"{t},0,1,80,12,0.2,0,locked\n" for t in (0, 1, 1))
        path.write_text("t,v,gear,N,T,fuel,F_wheel,tc_state\n" + rows)
        with pytest.raises(ParseError) as err:
            read_drive_trace(path)
        assert err.value.row == 3

    def test_nonuniform_step(self):
        with pytest.raises(InputError):
            DriveTrace(np.array([0, 1, 3.0]), np.zeros(3), np.ones(3, int), np.zeros(3),
                       np.zeros(3), np.zeros(3), np.zeros(3), ("locked",) * 3)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("gear,v\n1,2\n")
        with pytest.raises(ParseError) as err:
            read_vcd_samples(path)
        assert err.value.row == 0


def test_plane_surface_is_linear_form():
    s = TwoFacetSurface.plane((1.0, 2.0, 3.0))
    assert s(1.0, 1.0) == pytest.approx(LinearForm((1.0, 2.0, 3.0))(1.0, 1.0))

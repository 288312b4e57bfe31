import numpy as np
import pytest
from conftest import bundled_table

from vehicle_energy import Duty, FitError, SimplifiedModel, load_bundled
from vehicle_energy.reduction import (
    CachedOracle,
    PointwiseOracle,
    detect_duty,
    fit,
    fit_feasible_region,
    fit_simplified,
)


def arrays(*xs):
    return np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in xs))


def cubic_oracle(v, a, theta=0.0):
    v, a, theta = arrays(v, a, theta)
    return 0.2 + 0.01 * v + 1e-4 * v**3, np.ones(v.shape, dtype=bool)


def limit_oracle(v, a, theta=0.0):
    v, a, theta = arrays(v, a, theta)
    speed_limit = np.minimum(3.0, 40.0 / np.maximum(v, 1e-12))
    return np.ones(v.shape), a <= speed_limit - 9.0 * theta


class TestDutyDetection:
    def test_compact_sedan_is_light_duty_with_its_cut_speed(self):
        duty, v_c = detect_duty(SimplifiedModel(load_bundled("compact_sedan")))
        assert duty is Duty.LIGHT
        assert abs(v_c - 5.040) <= 1e-4

    @pytest.mark.parametrize("key", ["class8_tractor", "class4_pnd"])
    def test_heavy_vehicles(self, key):
        assert detect_duty(SimplifiedModel(load_bundled(key)))[0] is Duty.MEDIUM_HEAVY

    def test_strictly_positive_oracle_is_heavy_duty(self):
        assert detect_duty(cubic_oracle)[0] is Duty.MEDIUM_HEAVY

    def test_fully_infeasible_oracle_fails(self):
        def never(v, a, theta=0.0):
            v, a, theta = arrays(v, a, theta)
            return np.ones(v.shape), np.zeros(v.shape, dtype=bool)

        with pytest.raises(FitError):
            detect_duty(never)


class TestFuelSteps:
    def test_pure_cubic_leaves_later_steps_zero(self):
        coef, report = fit_simplified(cubic_oracle)
        for name in ("p0", "p1", "p2", "q0", "q1", "z0", "z1", "z2"):
            assert coef[name] == pytest.approx(0.0, abs=1e-12)
        assert coef["c0"] == pytest.approx(0.2, rel=1e-9)
        assert coef["c3"] == pytest.approx(1e-4, rel=1e-9)
        assert report.step_names == ["step1_floor", "step2", "step3", "step4", "step5"]

    def test_negative_slope_activates_constraints(self):
        def falling(v, a, theta=0.0):
            v, a, theta = arrays(v, a, theta)
            return 2.0 - 0.03 * v + 0.1 * np.maximum(a, 0), np.ones(v.shape, dtype=bool)

        coef, report = fit_simplified(falling)
        step2 = report.step("step2")
        assert set(step2.active) >= {"c1"}
        assert all(coef[k] >= 0 for k in ("c0", "c1", "c2", "c3"))

    def test_light_duty_report_has_five_steps(self):
        _, report = fit_simplified(SimplifiedModel(load_bundled("midsize_sedan")))
        assert report.step_names == ["step1", "step2", "step3", "step4", "step5"]
        assert report.duty is Duty.LIGHT

    def test_suv_fuel_polynomials_round_trip(self):
        coef, _ = fit_simplified(SimplifiedModel(load_bundled("midsize_suv")))
        table = bundled_table("midsize_suv")
        for name in ("c0", "c1", "c2", "c3", "p1", "p2", "q1", "z0", "z1", "z2"):
            assert coef[name] == pytest.approx(table[name], rel=0.02, abs=1e-3), name


class TestFeasibleRegion:
    def test_synthetic_limit_recovered(self):
        b, report = fit_feasible_region(limit_oracle)
        assert b["b1"] == pytest.approx(3.0, rel=0.01)
        assert b["b2"] == pytest.approx(40.0, rel=0.01)
        assert b["b3"] == pytest.approx(0.0, abs=1e-6)
        assert b["b5"] == pytest.approx(9.0, rel=0.01)
        assert b["b6"] == pytest.approx(0.0, abs=1e-6)
        assert [s.step for s in report.region_steps] == ["feasible_step1", "feasible_step2"]

    def test_compact_sedan_b_row(self):
        b, _ = fit_feasible_region(SimplifiedModel(load_bundled("compact_sedan")))
        table = bundled_table("compact_sedan")
        for name in ("b1", "b2", "b3", "b4", "b5", "b6"):
            assert b[name] == pytest.approx(table[name], rel=0.02, abs=1e-3), name

    def test_grade_independent_limit_has_no_grade_term(self):
        def flat(v, a, theta=0.0):
            v, a, theta = arrays(v, a, theta)
            return np.ones(v.shape), a <= np.minimum(3.0, 40.0 / np.maximum(v, 1e-12))

        b, _ = fit_feasible_region(flat)
        assert b["b4"] == b["b5"] == b["b6"] == 0.0

    def test_missing_ceiling_is_reported(self):
        with pytest.raises(FitError, match="fit_feasible_region"):
            fit(cubic_oracle)


def test_full_fit_returns_params_and_report():
    params, report = fit(SimplifiedModel(load_bundled("class4_pnd")), name="refit")
    assert params.name == "refit" and params.duty is Duty.MEDIUM_HEAVY
    assert report.step_names[0] == "step1_floor"
    doc = report.to_dict()
    assert len(doc["steps"]) == 5 and len(doc["feasible_region_steps"]) == 2


def test_pointwise_and_cached_oracles_agree():
    model = SimplifiedModel(load_bundled("compact_sedan"))
    scalar = PointwiseOracle(lambda v, a, th: tuple(x.item() for x in model(v, a, th)))
    cached = CachedOracle(model)
    v = np.linspace(0, 30, 7)
    f1, ok1 = scalar(v, 0.3, 0.01)
    f2, ok2 = cached.grid(v, 0.3, 0.01)
    np.testing.assert_array_equal(f1, f2)
    np.testing.assert_array_equal(ok1, ok2)

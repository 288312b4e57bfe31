import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings
from hypothesis import strategies as st
from nnls_oracle import brute_force_nnls

from vehicle_energy.reduction import bisect_many, bisect_root, kkt_gradient, nnls


class TestNnls:
    def test_nonnegative_optimum_equals_least_squares(self):
        rng = np.random.default_rng(0)
        A = rng.uniform(0.1, 1, (40, 3))
        x_true = np.array([1.0, 2.0, 0.5])
        b = A @ x_true + rng.normal(0, 1e-3, 40)
        ols = np.linalg.lstsq(A, b, rcond=None)[0]
        assert np.all(ols > 0)
        np.testing.assert_allclose(nnls(A, b), ols, rtol=0, atol=1e-9)

    def test_negatively_correlated_single_column_gives_zero(self):
        A = np.arange(1.0, 11.0)[:, None]
        assert nnls(A, -2.0 * A[:, 0]).tolist() == [0.0]

    def test_matches_brute_force_on_random_systems(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            A = rng.normal(size=(50, 3))
            b = rng.normal(size=50)
            got, want = nnls(A, b), brute_force_nnls(A, b)
            assert ((got > 0) == (want > 0)).all()
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-9)

    def test_kkt_conditions(self):
        rng = np.random.default_rng(5)
        A = rng.normal(size=(30, 6))
        b = rng.normal(size=30)
        x = nnls(A, b)
        g = kkt_gradient(A, b, x)
        assert np.all(x >= 0)
        assert np.all(g[x == 0] >= -1e-9)
        np.testing.assert_allclose(g[x > 0], 0.0, atol=1e-9)

    def test_agrees_with_scipy(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            A = rng.normal(size=(60, 8))
            b = rng.normal(size=60)
            np.testing.assert_allclose(nnls(A, b), scipy.optimize.nnls(A, b)[0], atol=1e-8)

    def test_scale_invariance_of_support(self):
        rng = np.random.default_rng(8)
        A = rng.normal(size=(50, 3)) * np.array([1e-4, 1.0, 1e4])
        b = rng.normal(size=50)
        got = nnls(A, b)
        want = brute_force_nnls(A, b)
        np.testing.assert_allclose(got * [1e-4, 1, 1e4], want * [1e-4, 1, 1e4], atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(4, 30), n=st.integers(1, 4))
def test_nnls_is_never_worse_than_any_support(seed, m, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n))
    b = rng.normal(size=m)
    x = nnls(A, b)
    assert np.all(x >= 0)
    best = brute_force_nnls(A, b)
    assert np.sum((A @ x - b) ** 2) <= np.sum((A @ best - b) ** 2) + 1e-9


class TestBisection:
    def test_linear_root(self):
        assert bisect_root(lambda x: x - 2, 0, 10) == pytest.approx(2, abs=1e-4)

    def test_quadratic_root(self):
        assert bisect_root(lambda x: x * x - 4, 0, 10) == pytest.approx(2, abs=1e-4)

    def test_tabulated_monotone_curve(self):
        xs = np.linspace(0, 5, 11)
        ys = 3.0 * xs - 7.3  # crosses zero at 7.3 / 3
        root = bisect_root(lambda x: np.interp(x, xs, ys), 0, 5, tol=1e-6)
        assert root == pytest.approx(7.3 / 3, abs=1e-6)

    def test_no_sign_change_returns_none(self):
        assert bisect_root(lambda x: x + 1, 0, 10) is None

    def test_boolean_transition(self):
        assert bisect_root(lambda x: x > 1.25, 0, 4, tol=1e-8) == pytest.approx(1.25, abs=1e-8)

    def test_vectorized(self):
        targets = np.array([0.5, 2.0, 7.5])
        roots = bisect_many(lambda x: x > targets, np.zeros(3), np.full(3, 10.0), tol=1e-7)
        np.testing.assert_allclose(roots, targets, atol=1e-7)
        assert np.isnan(bisect_many(lambda x: x > 20, np.zeros(1), np.ones(1)))[0]

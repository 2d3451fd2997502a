import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from taylor_sr import expr as ex
from taylor_sr.data import Dataset
from taylor_sr.taylor import (
    FitConfig,
    FitError,
    TaylorPoly,
    choose_order,
    fit_taylor,
    monomials,
    poly_eval,
    poly_eval_batch,
    poly_to_expr,
    refit_coefficients,
    select_center_and_neighborhood,
    shift_center,
    truncate,
)

from strategies import seeds


def dataset(f, lo, hi, n, d, seed=0):
    X = np.random.default_rng(seed).uniform(lo, hi, (n, d))
    return Dataset(X, f(X), [f"x{i}" for i in range(d)], "y")


def quadratic(X):
    x = X[:, 0]
    return 1.1 * x + 0.2 * x**2 - 3.7


class TestConfig:
    def test_schedule(self):
        cfg = FitConfig()
        assert [cfg.order_cap(d) for d in (1, 2, 3, 4, 5, 6, 21)] == [18, 8, 8, 4, 3, 2, 2]

    @pytest.mark.parametrize("kw", [{"k_max": 0}, {"oversample": 0.5}, {"ridge": -1.0}, {"coef_eps": -1e-3}])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            FitConfig(**kw)


class TestChooseOrder:
    @pytest.mark.parametrize("d, n, k", [(1, 20, 18), (2, 400, 8), (21, 1000, 2)])
    def test_examples(self, d, n, k):
        assert choose_order(d, n) == k

    def test_too_small(self):
        with pytest.raises(FitError):
            choose_order(3, 3)

    @given(st.integers(1, 6), st.integers(2, 3000))
    def test_count_bound(self, d, n):
        try:
            k = choose_order(d, n)
        except FitError:
            assert math.comb(d + 1, d) > n
            return
        assert math.comb(d + k, d) <= n


class TestMonomials:
    @given(st.integers(1, 4), st.integers(0, 5))
    def test_count_and_order(self, d, k):
        ms = monomials(d, k)
        assert len(ms) == math.comb(d + k, d)
        assert len(set(ms)) == len(ms)
        assert [sum(m) for m in ms] == sorted(sum(m) for m in ms)


class TestNeighborhood:
    def test_median_point(self):
        data = Dataset(np.arange(5.0)[:, None], np.zeros(5))
        c, nb = select_center_and_neighborhood(data, 2)
        assert c == 2 and set(nb.tolist()) == {1, 3}

    def test_duplicates_allowed(self):
        X = np.array([[0.0], [1.0], [1.0], [1.0], [5.0]])
        c, nb = select_center_and_neighborhood(Dataset(X, np.zeros(5)), 2)
        assert X[c, 0] == 1.0 and X[nb, 0].tolist() == [1.0, 1.0]

    def test_whole_remainder(self):
        data = Dataset(np.arange(6.0)[:, None], np.zeros(6))
        c, nb = select_center_and_neighborhood(data, 5)
        assert sorted(nb.tolist() + [c]) == list(range(6))


class TestFit:
    def test_quadratic_recovery(self):
        data = dataset(quadratic, -1, 1, 20, 1)
        p = shift_center(fit_taylor(data), [0.0])
        t = truncate(p, 1e-6)
        assert set(t.coeffs) == {(0,), (1,), (2,)}
        assert t.coeffs[(0,)] == pytest.approx(-3.7, abs=1e-6)
        assert t.coeffs[(1,)] == pytest.approx(1.1, abs=1e-6)
        assert t.coeffs[(2,)] == pytest.approx(0.2, abs=1e-6)

    def test_constant_target(self):
        data = dataset(lambda X: np.full(len(X), 2.5), -1, 1, 30, 2)
        t = truncate(fit_taylor(data), 1e-4)
        assert set(t.coeffs) == {(0, 0)}

    def test_sine_series_near_zero(self):
        # data symmetric about 0 so the expansion point is the origin
        x = np.linspace(-1, 1, 41)
        data = Dataset(x[:, None], 1.5 * np.sin(x))
        p = fit_taylor(data)
        assert p.center[0] == 0.0
        assert p.coeffs[(1,)] == pytest.approx(1.5, abs=1e-6)
        assert p.coeffs[(3,)] == pytest.approx(-0.25, abs=1e-6)
        assert p.coeffs[(5,)] == pytest.approx(0.0125, abs=1e-6)

    def test_value_at_center_is_y0(self):
        data = dataset(lambda X: np.exp(X[:, 0]) * X[:, 1], 0, 1, 100, 2)
        p = fit_taylor(data)
        i = int(np.flatnonzero((data.X == p.center).all(axis=1))[0])
        assert poly_eval(p, p.center) == data.y[i]

    def test_f28_surrogate_accuracy(self):
        data = dataset(lambda X: 0.5 * X[:, 0] * X[:, 1] ** 2, 2, 4, 400, 2)
        p = fit_taylor(data)
        Z = np.random.default_rng(9).uniform(2, 4, (100, 2))
        err = np.abs(poly_eval_batch(p, Z) - 0.5 * Z[:, 0] * Z[:, 1] ** 2)
        assert err.max() < 1e-4

    def test_order_drops_on_rank_deficiency(self):
        # on the curve x1 = x0^2 the columns x1 and x0^2 coincide from order 2 up
        t = np.linspace(0, 1, 60)
        data = Dataset(np.column_stack([t, t**2]), t + t**2)
        p = fit_taylor(data, k=3)
        assert p.order == 1

    @given(seeds)
    def test_random_polynomial_recovery(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 4))
        g = int(rng.integers(1, 5))
        support = monomials(d, g)
        keep = rng.random(len(support)) < 0.5
        coeffs = {m: float(rng.uniform(-5, 5)) for m, k in zip(support, keep) if k}
        truth = TaylorPoly(np.zeros(d), coeffs, g)
        n = 2 * math.comb(d + g, d) * 3
        X = rng.uniform(-1, 1, (max(n, 30), d))
        data = Dataset(X, poly_eval_batch(truth, X))
        p = truncate(shift_center(fit_taylor(data, k=g), np.zeros(d)), 1e-6)
        assert set(p.coeffs) == {m for m, c in coeffs.items() if abs(c) >= 1e-6}
        for m, c in coeffs.items():
            assert p.coeffs.get(m, 0.0) == pytest.approx(c, abs=1e-6)


class TestPolynomialOps:
    p = TaylorPoly(np.zeros(1), {(0,): -3.7, (1,): 1.1, (2,): 0.2}, 2)

    def test_eval(self):
        assert poly_eval(self.p, [1.0]) == pytest.approx(-2.4)
        assert poly_eval(TaylorPoly(np.zeros(2), {(0, 0): -3.7}, 0), [5.0, 1.0]) == -3.7

    def test_truncate(self):
        assert truncate(self.p, 0.0) == self.p
        assert truncate(self.p, 10.0).coeffs == {}
        with pytest.raises(ValueError):
            truncate(self.p, -1.0)

    @given(st.floats(0, 5), st.floats(0, 5))
    def test_truncate_monotone_and_idempotent(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert set(truncate(self.p, hi).coeffs) <= set(truncate(self.p, lo).coeffs)
        assert truncate(truncate(self.p, lo), lo) == truncate(self.p, lo)

    def test_truncate_f28_style(self):
        p = TaylorPoly(np.zeros(2), {(0, 0): 3e-6, (1, 0): -2e-5, (1, 2): 0.5, (0, 2): 4e-7}, 3)
        assert truncate(p, 1e-4).coeffs == {(1, 2): 0.5}

    @given(seeds)
    def test_shift_center_is_exact(self, seed):
        rng = np.random.default_rng(seed)
        coeffs = {m: float(rng.uniform(-2, 2)) for m in monomials(2, 3)}
        p = TaylorPoly(rng.uniform(-1, 1, 2), coeffs, 3)
        q = shift_center(p, rng.uniform(-1, 1, 2))
        Z = rng.uniform(-2, 2, (20, 2))
        assert np.allclose(poly_eval_batch(p, Z), poly_eval_batch(q, Z), rtol=1e-12, atol=1e-11)

    def test_to_expr(self):
        assert poly_to_expr(TaylorPoly(np.zeros(1), {(0,): -3.7}, 0)) == ex.const(-3.7)
        e = poly_to_expr(TaylorPoly(np.zeros(2), {(1, 2): 0.5}, 3))
        assert e == ex.mul(ex.mul(ex.mul(ex.const(0.5), ex.var(0)), ex.var(1)), ex.var(1))
        assert poly_to_expr(TaylorPoly(np.zeros(1), {}, 0)) == ex.const(0.0)

    @given(seeds)
    def test_to_expr_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        coeffs = {m: float(rng.uniform(-5, 5)) for m in monomials(2, 3)}
        p = TaylorPoly(rng.uniform(-1, 1, 2), coeffs, 3)
        Z = rng.uniform(-1, 1, (25, 2))
        assert np.allclose(ex.eval_batch(poly_to_expr(p), Z), poly_eval_batch(p, Z), rtol=0, atol=1e-12 * 50)


class TestRefit:
    def test_exact_coefficients(self):
        data = dataset(quadratic, -1, 1, 20, 1)
        p = refit_coefficients([(0,), (1,), (2,)], data)
        assert p.coeffs[(0,)] == pytest.approx(-3.7, abs=1e-10)
        assert p.coeffs[(1,)] == pytest.approx(1.1, abs=1e-10)
        assert p.coeffs[(2,)] == pytest.approx(0.2, abs=1e-10)

    def test_constant_is_mean(self):
        data = dataset(lambda X: np.sin(3 * X[:, 0]), -1, 1, 20, 1)
        assert refit_coefficients([(0,)], data).coeffs[(0,)] == pytest.approx(data.y.mean())

    def test_support_larger_than_data(self):
        data = dataset(quadratic, -1, 1, 3, 1)
        with pytest.raises(FitError):
            refit_coefficients(monomials(1, 5), data)

    def test_refit_never_worse_than_local(self):
        data = dataset(lambda X: np.exp(X[:, 0]), -1, 1, 60, 1, seed=4)
        local = truncate(shift_center(fit_taylor(data, k=3), [0.0]), 0.0)
        refit = refit_coefficients(local.coeffs.keys(), data)
        def err(p):
            return float(np.sqrt(np.mean((poly_eval_batch(p, data.X) - data.y) ** 2)))
        assert err(refit) <= err(local) + 1e-15

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from taylor_sr import expr as ex
from taylor_sr.expr import Parity
from taylor_sr.interval import Interval

from strategies import seeds, trees

x0, x1 = ex.var(0), ex.var(1)


class TestConstruction:
    def test_arity_is_checked(self):
        with pytest.raises(ValueError):
            ex.Expr("add", (x0,))
        with pytest.raises(ValueError):
            ex.Expr("sin", (x0, x1))

    def test_negative_variable_rejected(self):
        with pytest.raises(ValueError):
            ex.var(-1)

    def test_immutable(self):
        e = ex.add(x0, ex.const(1.0))
        with pytest.raises(AttributeError):
            e.op = "sub"

    def test_structural_equality_and_hash(self):
        a = ex.mul(ex.sin(x0), x1)
        b = ex.mul(ex.sin(ex.var(0)), ex.var(1))
        assert a == b and hash(a) == hash(b)
        assert a != ex.mul(x1, ex.sin(x0))

    @pytest.mark.parametrize(
        "e, n",
        [(ex.const(5.0), 1), (ex.add(x0, ex.const(1.0)), 3)],
    )
    def test_node_count(self, e, n):
        assert ex.node_count(e) == n

    def test_node_count_of_pruning_example(self):
        x = ex.var(0)
        two = ex.const(2.0)
        e = ex.add(
            ex.add(ex.mul(two, x), ex.mul(two, ex.sin(x))),
            ex.add(x, ex.mul(x, ex.mul(x, x))),
        )
        # counted by hand: 8 nodes on the left, 7 on the right, 1 root
        assert e.size == 16

    def test_nvars(self):
        assert ex.const(1.0).n_vars() == 0
        assert ex.add(ex.var(3), x0).n_vars() == 4


class TestEvaluation:
    def test_constant(self):
        assert ex.evaluate(ex.const(3.7), [9.0]) == 3.7

    def test_sum(self):
        assert ex.evaluate(ex.add(x0, ex.const(1.0)), [2.0]) == 3.0

    def test_power_identity(self):
        e = ex.exp(ex.mul(ex.log(x0), x1))
        assert ex.evaluate(e, [2.0, 3.0]) == pytest.approx(8.0, rel=1e-14)

    def test_batch_constant_broadcasts(self):
        out = ex.eval_batch(ex.const(2.0), np.zeros((5, 1)))
        assert out.tolist() == [2.0] * 5

    def test_batch_variable(self):
        assert ex.eval_batch(x0, np.array([[1.0], [2.0], [3.0]])).tolist() == [1.0, 2.0, 3.0]

    def test_division_by_zero_is_in_band(self):
        out = ex.eval_batch(ex.div(ex.const(1.0), x0), np.array([[0.0]]))
        assert out.shape == (1,) and not np.isfinite(out[0])

    def test_protected_log_uses_magnitude(self):
        assert ex.evaluate(ex.log(x0), [-math.e]) == pytest.approx(1.0)

    def test_sqrt_of_negative_is_nan(self):
        assert math.isnan(ex.evaluate(ex.sqrt(x0), [-1.0]))

    @given(trees(), seeds)
    def test_evaluator_matches_eval_batch(self, e, seed):
        X = np.random.default_rng(seed).uniform(-3, 3, (30, 2))
        ev = ex.Evaluator(X)
        a = ev(e)
        b = ex.eval_batch(e, X)
        assert np.array_equal(a, b, equal_nan=True)
        # memoized second call is identical too
        assert np.array_equal(ev(e), b, equal_nan=True)


class TestDifferentiate:
    def test_worked_example(self):
        c = ex.const(1.3)
        e = ex.add(ex.add(c, x0), ex.sin(x0))
        d = ex.differentiate(e, 0)
        for x in np.linspace(-3, 3, 13):
            assert ex.evaluate(d, [x]) == pytest.approx(1.0 + math.cos(x), abs=1e-14)

    def test_constant(self):
        assert ex.differentiate(ex.const(4.0), 0) == ex.const(0.0)

    def test_square(self):
        d = ex.differentiate(ex.mul(x0, x0), 0)
        for x in (-2.0, 0.5, 3.0):
            assert ex.evaluate(d, [x]) == pytest.approx(2 * x)

    def test_other_variable_is_constant(self):
        assert ex.differentiate(ex.sin(x1), 0) == ex.const(0.0)

    @given(trees(d=2, max_depth=4), seeds)
    def test_matches_finite_differences(self, e, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0.5, 2.0, 2)
        for i in range(2):
            h = 1e-6 * max(1.0, abs(x[i]))
            up, dn = x.copy(), x.copy()
            up[i] += h
            dn[i] -= h
            with np.errstate(all="ignore"):
                fd = (ex.evaluate(e, up) - ex.evaluate(e, dn)) / (2 * h)
                d = ex.evaluate(ex.differentiate(e, i), x)
                fd2 = (ex.evaluate(e, x + (up - x) / 2) - ex.evaluate(e, x - (up - x) / 2)) / h
            if not (np.isfinite(fd) and np.isfinite(d) and np.isfinite(fd2)):
                continue
            # skip points where the difference quotient itself has not settled
            if abs(fd - fd2) > 1e-6 * max(1.0, abs(fd)):
                continue
            assert abs(d - fd) <= 1e-4 * max(1.0, abs(fd))


class TestParity:
    dom = [Interval(-2.0, 2.0)]

    @pytest.mark.parametrize(
        "e, want",
        [
            (ex.sin(ex.var(0)), Parity.ODD),
            (ex.cos(ex.var(0)), Parity.EVEN),
            (ex.add(ex.add(ex.const(0.7), ex.var(0)), ex.sin(ex.var(0))), Parity.NONE),
        ],
    )
    def test_classification(self, e, want):
        assert ex.parity_of(e, self.dom, np.random.default_rng(0)) == want

    def test_non_finite_sample_gives_none(self):
        e = ex.div(ex.const(1.0), ex.sub(ex.var(0), ex.var(0)))
        assert ex.parity_of(e, self.dom, np.random.default_rng(0)) == Parity.NONE

    @given(trees(d=1, max_depth=4), seeds)
    def test_odd_survives_negated_reflection(self, e, seed):
        pts = ex.sample_box(self.dom, 64, np.random.default_rng(seed))
        if ex.parity_at(e, pts) != Parity.ODD:
            return
        g = ex.mul(ex.const(-1.0), ex.substitute(e, ex.mul(ex.const(-1.0), ex.var(0))))
        assert ex.parity_at(g, pts) == Parity.ODD


class TestText:
    def test_format(self):
        assert ex.format_expr(ex.add(x0, ex.const(1.0))) == "(x0 + 1.0)"

    def test_parse(self):
        assert ex.parse("sin(x0)*x1") == ex.mul(ex.sin(x0), x1)

    def test_parse_error_at_end(self):
        with pytest.raises(ex.ParseError, match="end of input"):
            ex.parse("x0 +")

    def test_parse_error_names_token(self):
        with pytest.raises(ex.ParseError, match="position"):
            ex.parse("x0 + * x1")

    @given(trees(d=2, max_depth=5), seeds)
    def test_round_trip_evaluates_identically(self, e, seed):
        back = ex.parse(ex.format_expr(e))
        X = np.random.default_rng(seed).uniform(-3, 3, (20, 2))
        assert np.array_equal(ex.eval_batch(back, X), ex.eval_batch(e, X), equal_nan=True)

import numpy as np
import pytest
from hypothesis import given, settings

from taylor_sr import expr as ex
from taylor_sr import interval as iv
from taylor_sr.expr import Monotonicity, Parity
from taylor_sr.interval import Interval
from taylor_sr.rules import (
    TraitOracle,
    Traits,
    build,
    combine_monotone,
    combine_parity,
    derivative_flags,
    predict,
    satisfies,
    symmetric,
)

from oracles import RULE_DOMAIN, check_claim, rule_applications
from strategies import seeds

ODD, EVEN, NONE = Parity.ODD, Parity.EVEN, Parity.NONE
X = ex.var(0)


def tr(parity=NONE, inc=False, dec=False, lo=-1.0, hi=1.0):
    return Traits(parity, inc, dec, Interval(lo, hi))


class TestParityTable:
    @pytest.mark.parametrize("op", ["add", "sub"])
    @pytest.mark.parametrize("a, b, want", [(ODD, ODD, ODD), (EVEN, EVEN, EVEN), (ODD, EVEN, NONE), (NONE, ODD, NONE)])
    def test_sums(self, op, a, b, want):
        assert combine_parity(op, a, b) == want

    @pytest.mark.parametrize("op", ["mul", "div"])
    @pytest.mark.parametrize("a, b, want", [(ODD, ODD, EVEN), (EVEN, EVEN, EVEN), (ODD, EVEN, ODD), (EVEN, ODD, ODD), (NONE, EVEN, NONE)])
    def test_products(self, op, a, b, want):
        assert combine_parity(op, a, b) == want

    @pytest.mark.parametrize("outer, inner, want", [(ODD, ODD, ODD), (EVEN, ODD, EVEN), (NONE, EVEN, EVEN), (ODD, NONE, NONE), (NONE, ODD, NONE)])
    def test_compose(self, outer, inner, want):
        assert combine_parity("compose", outer, inner) == want


class TestMonotoneTable:
    def test_sum_of_increasing(self):
        assert combine_monotone("add", tr(inc=True), tr(inc=True)) == (True, False)

    def test_difference_flips(self):
        assert combine_monotone("sub", tr(inc=True), tr(dec=True)) == (True, False)
        assert combine_monotone("sub", tr(dec=True), tr(inc=True)) == (False, True)

    def test_product_needs_nonnegative_ranges(self):
        assert combine_monotone("mul", tr(inc=True, lo=0, hi=2), tr(inc=True, lo=1, hi=2)) == (True, False)
        assert combine_monotone("mul", tr(inc=True, lo=-1, hi=2), tr(inc=True, lo=1, hi=2)) == (False, False)

    def test_quotient_needs_positive_denominator(self):
        f, g = tr(inc=True, lo=0, hi=1), tr(dec=True, lo=1, hi=2)
        assert combine_monotone("div", f, g) == (True, False)
        assert combine_monotone("div", f, tr(dec=True, lo=0, hi=2)) == (False, False)

    def test_compose_uses_outer_flags_over_inner_range(self):
        g = tr(dec=True, lo=0, hi=1)
        assert combine_monotone("compose", tr(), g, (True, False)) == (False, True)
        assert combine_monotone("compose", tr(), g, (False, True)) == (True, False)

    def test_constant_carries_both(self):
        c = tr(inc=True, dec=True, lo=2, hi=2)
        assert combine_monotone("add", c, tr(inc=True)) == (True, False)


class TestPredict:
    def test_odd_sum(self):
        o = TraitOracle([Interval(-1, 1)], np.random.default_rng(0))
        f, g = ex.mul(ex.const(2.0), X), ex.sin(X)
        t = predict("add", f, o.traits(f), g, o.traits(g), o)
        assert t.parity == ODD and t.inc
        assert t.range.lo <= -2 - np.sin(1) and t.range.hi >= 2 + np.sin(1)

    def test_even_outer_with_odd_inner(self):
        o = TraitOracle([Interval(-1, 1)], np.random.default_rng(0))
        f, g = ex.cos(X), ex.sin(X)
        t = predict("compose", f, o.traits(f), g, o.traits(g), o)
        assert t.parity == EVEN and t.range == iv.Entire

    def test_compose_log_of_increasing(self):
        o = TraitOracle([Interval(1, 2)], np.random.default_rng(0))
        f, g = ex.log(X), ex.exp(X)
        t = predict("compose", f, o.traits(f), g, o.traits(g), o)
        assert t.inc and not t.dec

    def test_satisfies(self):
        assert satisfies(tr(ODD, inc=True), ODD, Monotonicity.INCREASING)
        assert not satisfies(tr(EVEN), ODD, Monotonicity.NONE)
        assert not satisfies(tr(ODD), NONE, Monotonicity.DECREASING)
        assert satisfies(tr(), NONE, Monotonicity.NONE)


class TestOracle:
    def test_symmetric(self):
        assert symmetric([Interval(0.5, 3)]) == [Interval(-3, 3)]

    def test_derivative_flags(self):
        assert derivative_flags(ex.exp(X), [Interval(0, 1)]) == (True, False)
        assert derivative_flags(ex.mul(X, X), [Interval(-1, 1)]) == (False, False)
        assert derivative_flags(ex.const(3.0), [Interval(0, 1)]) == (True, True)

    def test_nowhere_defined_has_no_direction(self):
        o = TraitOracle([Interval(0, 1)], np.random.default_rng(0))
        e = ex.add(X, ex.sqrt(ex.const(-2.0)))
        assert o.flags(e) == (False, False)

    def test_build(self):
        assert build("compose", ex.sin(X), ex.exp(X)) == ex.sin(ex.exp(X))
        assert build("div", X, ex.cos(X)) == ex.div(X, ex.cos(X))


class TestSoundness:
    @settings(max_examples=10, deadline=None)
    @given(seeds)
    def test_random_applications(self, seed):
        pts = TraitOracle(RULE_DOMAIN, np.random.default_rng(seed)).points
        for op, child, claim in rule_applications(100, seed % 2**31):
            assert check_claim(child, claim, pts) == [], (op, ex.format_expr(child))

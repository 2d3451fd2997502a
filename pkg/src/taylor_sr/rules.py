"""Function combination rules.

Given the parity, monotonicity and value range of two functions, these rules
predict the class of ``f + g``, ``f - g``, ``f * g``, ``f / g`` and the
composition ``f(g(x))``.  Monotonicity is tracked as a pair of flags
(non-decreasing, non-increasing) so a constant carries both.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import expr as ex
from . import interval as iv
from .expr import Expr, Monotonicity, Parity
from .interval import Interval

COMBINERS = ("add", "sub", "mul", "div", "compose")


@dataclass(frozen=True)
class Traits:
    parity: Parity
    inc: bool
    dec: bool
    range: Interval

    @property
    def monotonicity(self) -> Monotonicity:
        if self.inc:
            return Monotonicity.INCREASING
        if self.dec:
            return Monotonicity.DECREASING
        return Monotonicity.NONE


def combine_parity(op: str, a: Parity, b: Parity) -> Parity:
    """Parity of ``a op b``; for ``compose`` ``a`` is the outer function."""
    if op == "compose":
        if b == Parity.EVEN:
            return Parity.EVEN
        if b == Parity.ODD:
            return a
        return Parity.NONE
    if Parity.NONE in (a, b):
        return Parity.NONE
    if op in ("add", "sub"):
        return a if a == b else Parity.NONE
    # mul, div: like signs give even, mixed give odd
    return Parity.EVEN if a == b else Parity.ODD


def combine_monotone(op: str, f: Traits, g: Traits, f_over_g: tuple[bool, bool] | None = None) -> tuple[bool, bool]:
    """(non-decreasing, non-increasing) flags of ``f op g``.

    Products need both ranges non-negative; quotients need a non-negative
    numerator and a strictly positive denominator.  For ``compose`` pass
    ``f_over_g``: the flags of ``f`` over the range of ``g``.
    """
    if op == "add":
        return f.inc and g.inc, f.dec and g.dec
    if op == "sub":
        return f.inc and g.dec, f.dec and g.inc
    if op == "mul":
        if f.range.lo >= 0 and g.range.lo >= 0:
            return f.inc and g.inc, f.dec and g.dec
        return False, False
    if op == "div":
        if f.range.lo >= 0 and g.range.lo > 0:
            return f.inc and g.dec, f.dec and g.inc
        return False, False
    finc, fdec = f_over_g if f_over_g is not None else (f.inc, f.dec)
    return (finc and g.inc) or (fdec and g.dec), (finc and g.dec) or (fdec and g.inc)


def build(op: str, f: Expr, g: Expr) -> Expr:
    if op == "compose":
        return ex.compose(f, g)
    return ex.Expr(op, (f, g))


def symmetric(domain: Sequence[Interval]) -> list[Interval]:
    out = []
    for d in domain:
        m = max(abs(d.lo), abs(d.hi))
        out.append(Interval(-m, m))
    return out


def derivative_flags(e: Expr, domain: Sequence[Interval]) -> tuple[bool, bool]:
    """Sign of every partial derivative over ``domain`` by interval evaluation."""
    used = sorted({n.arg for n in e.walk() if n.op == "var"})
    inc = dec = True
    for t in used:
        r = iv.iv_eval(ex.differentiate(e, t), domain)
        inc = inc and r.lo >= 0
        dec = dec and r.hi <= 0
        if not (inc or dec):
            break
    return inc, dec


class TraitOracle:
    """Measures traits of concrete expressions on one problem domain.

    Parity is tested at fixed symmetric points drawn once, so repeated
    queries are deterministic.  Like the data-backed probe, an expression
    that is not finite at every inner sample point has no monotonicity.
    """

    def __init__(self, domain: Sequence[Interval], rng: np.random.Generator, samples: int = 32, tol: float = 1e-8):
        self.domain = list(domain)
        self.sym = symmetric(self.domain)
        self.points = ex.sample_box(self.sym, samples, rng)
        self.inner = ex.sample_box(self.domain, samples, rng)
        self.tol = tol

    def parity(self, e: Expr) -> Parity:
        return ex.parity_at(e, self.points, self.tol)

    def flags(self, e: Expr) -> tuple[bool, bool]:
        with np.errstate(all="ignore"):
            finite = np.all(np.isfinite(ex.eval_batch(e, self.inner)))
        if not finite:
            return False, False
        return derivative_flags(e, self.domain)

    def value_range(self, e: Expr) -> Interval:
        return iv.iv_eval(e, self.domain)

    def flags_over(self, f: Expr, r: Interval) -> tuple[bool, bool]:
        return derivative_flags(f, [r] * max(f.nvars, 1))

    def traits(self, e: Expr, need_parity: bool = True) -> Traits:
        inc, dec = self.flags(e)
        par = self.parity(e) if need_parity else Parity.NONE
        return Traits(par, inc, dec, self.value_range(e))


def predict(op: str, f: Expr, ft: Traits, g: Expr, gt: Traits, probe) -> Traits:
    """Traits of ``f op g`` implied by the rules.

    ``probe.flags_over(f, range)`` gives the monotonicity of the outer
    function for compositions.  The child range is enclosed from the parent
    ranges (left unbounded for compositions).
    """
    if op == "compose":
        # the outer flags only matter when the inner function is monotone
        over = probe.flags_over(f, gt.range) if gt.inc or gt.dec else (False, False)
        rng_ = iv.Entire
    else:
        over = None
        rng_ = _RANGE_OPS[op](ft.range, gt.range)
    inc, dec = combine_monotone(op, ft, gt, over)
    return Traits(combine_parity(op, ft.parity, gt.parity), inc, dec, rng_)


_RANGE_OPS = {"add": iv.iv_add, "sub": iv.iv_sub, "mul": iv.iv_mul, "div": iv.iv_div}


def satisfies(t: Traits, parity: Parity, mono: Monotonicity) -> bool:
    if parity != Parity.NONE and t.parity != parity:
        return False
    if mono == Monotonicity.INCREASING and not t.inc:
        return False
    if mono == Monotonicity.DECREASING and not t.dec:
        return False
    return True

"""Closed intervals over the extended reals.

Plain floating point, no directed rounding: the bounds are used as search
heuristics, not as verified enclosures.  Endpoint images of the elementary
functions use numpy, the same routines that evaluate expressions, so a point
result never lands an ulp outside its interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import Expr

INF = math.inf


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi) or self.lo > self.hi:
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x: float) -> Interval:
        return cls(x, x)

    @classmethod
    def entire(cls) -> Interval:
        return cls(-INF, INF)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    def __contains__(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def __repr__(self) -> str:
        return f"[{self.lo}, {self.hi}]"

    def as_list(self) -> list[float]:
        return [self.lo, self.hi]


Entire = Interval(-INF, INF)


def _iv(x) -> Interval:
    return x if isinstance(x, Interval) else Interval(float(x), float(x))


def _mul0(a: float, b: float) -> float:
    # 0 * inf is taken as 0 (the limit of the bounded factor)
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


def iv_neg(a: Interval) -> Interval:
    return Interval(-a.hi, -a.lo)


def iv_add(a, b) -> Interval:
    a, b = _iv(a), _iv(b)
    lo = a.lo + b.lo
    hi = a.hi + b.hi
    if math.isnan(lo):
        lo = -INF
    if math.isnan(hi):
        hi = INF
    return Interval(lo, hi)


def iv_sub(a, b) -> Interval:
    return iv_add(a, iv_neg(_iv(b)))


def iv_mul(a, b) -> Interval:
    a, b = _iv(a), _iv(b)
    p = (_mul0(a.lo, b.lo), _mul0(a.lo, b.hi), _mul0(a.hi, b.lo), _mul0(a.hi, b.hi))
    return Interval(min(p), max(p))


def iv_scale(a, c: float) -> Interval:
    return iv_mul(a, Interval(c, c))


def iv_div(a, b) -> Interval:
    a, b = _iv(a), _iv(b)
    if b.lo <= 0.0 <= b.hi:
        return Entire
    # divide endpoints directly: a*(1/b) rounds twice and can land inside
    q = [_div0(u, v) for u in (a.lo, a.hi) for v in (b.lo, b.hi)]
    return Interval(min(q), max(q))


def _div0(u: float, v: float) -> float:
    # finite / inf -> 0; inf / inf is the limit of the unbounded numerator
    if math.isinf(u) and math.isinf(v):
        return math.copysign(INF, u) * math.copysign(1.0, v)
    return u / v


def iv_pow_nat(a, n: int) -> Interval:
    a = _iv(a)
    if n < 0:
        raise ValueError("exponent must be a natural number")
    if n == 0:
        return Interval(1.0, 1.0)
    if n % 2 == 1:
        return Interval(_pow(a.lo, n), _pow(a.hi, n))
    mag_hi = _pow(max(abs(a.lo), abs(a.hi)), n)
    mag_lo = 0.0 if a.lo <= 0.0 <= a.hi else _pow(min(abs(a.lo), abs(a.hi)), n)
    return Interval(mag_lo, mag_hi)


def _pow(x: float, n: int) -> float:
    try:
        return x**n
    except OverflowError:
        return INF if x > 0 or n % 2 == 0 else -INF


def _contains_point_of(a: Interval, offset: float, period: float) -> bool:
    """Whether ``a`` contains some ``offset + k*period``."""
    if not a.bounded:
        return True
    k = math.ceil((a.lo - offset) / period)
    return offset + k * period <= a.hi


def iv_sin(a) -> Interval:
    a = _iv(a)
    if not a.bounded or a.width >= 2 * math.pi:
        return Interval(-1.0, 1.0)
    s_lo, s_hi = _np1(np.sin, a.lo), _np1(np.sin, a.hi)
    lo, hi = min(s_lo, s_hi), max(s_lo, s_hi)
    if _contains_point_of(a, math.pi / 2, 2 * math.pi):
        hi = 1.0
    if _contains_point_of(a, -math.pi / 2, 2 * math.pi):
        lo = -1.0
    return Interval(lo, hi)


def iv_cos(a) -> Interval:
    a = _iv(a)
    if not a.bounded or a.width >= 2 * math.pi:
        return Interval(-1.0, 1.0)
    c_lo, c_hi = _np1(np.cos, a.lo), _np1(np.cos, a.hi)
    lo, hi = min(c_lo, c_hi), max(c_lo, c_hi)
    if _contains_point_of(a, 0.0, 2 * math.pi):
        hi = 1.0
    if _contains_point_of(a, math.pi, 2 * math.pi):
        lo = -1.0
    return Interval(lo, hi)


def _np1(f, x: float) -> float:
    with np.errstate(all="ignore"):
        return float(f(np.float64(x)))


def _exp(x: float) -> float:
    return _np1(np.exp, x)


def iv_exp(a) -> Interval:
    a = _iv(a)
    return Interval(_exp(a.lo), _exp(a.hi))


def _log(x: float) -> float:
    return -INF if x == 0.0 else _np1(np.log, x)


def iv_logabs(a) -> Interval:
    a = _iv(a)
    if a.lo <= 0.0 <= a.hi:
        return Interval(-INF, _log(max(-a.lo, a.hi)))
    mags = (abs(a.lo), abs(a.hi))
    return Interval(_log(min(mags)), _log(max(mags)))


def iv_sqrt(a) -> Interval:
    a = _iv(a)
    return Interval(_np1(np.sqrt, max(a.lo, 0.0)), _np1(np.sqrt, max(a.hi, 0.0)))


def iv_asin(a) -> Interval:
    a = _iv(a)
    lo, hi = max(a.lo, -1.0), min(a.hi, 1.0)
    if lo > hi:
        return Interval(-math.pi / 2, math.pi / 2)
    return Interval(_np1(np.arcsin, lo), _np1(np.arcsin, hi))


def iv_contains(a: Interval, b: Interval) -> bool:
    return a.lo <= b.lo and b.hi <= a.hi


def iv_union(a: Interval, b: Interval) -> Interval:
    return Interval(min(a.lo, b.lo), max(a.hi, b.hi))


_UNARY = {
    "sin": iv_sin,
    "cos": iv_cos,
    "log": iv_logabs,
    "exp": iv_exp,
    "sqrt": iv_sqrt,
    "asin": iv_asin,
}
_BINARY = {"add": iv_add, "sub": iv_sub, "mul": iv_mul, "div": iv_div}


def iv_eval(e: Expr, domain: Sequence[Interval], const_range: Interval | None = None) -> Interval:
    """Interval enclosure of ``e`` with variable ``i`` ranging over ``domain[i]``.

    With ``const_range`` every constant leaf is widened to that interval
    (used for template placeholders).
    """
    op = e.op
    if op == "var":
        return domain[e.arg]
    if op == "const":
        return const_range if const_range is not None else Interval(e.arg, e.arg)
    if op in _BINARY:
        a = iv_eval(e.children[0], domain, const_range)
        if op == "mul" and e.children[0] == e.children[1] and (
            const_range is None or not _has_const(e.children[0])
        ):
            return iv_pow_nat(a, 2)
        b = iv_eval(e.children[1], domain, const_range)
        return _BINARY[op](a, b)
    return _UNARY[op](iv_eval(e.children[0], domain, const_range))


def _has_const(e: Expr) -> bool:
    return any(n.op == "const" for n in e.walk())

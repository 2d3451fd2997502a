"""Expression-space segmentation into depth-h templates.

A template is a tree of depth exactly ``h`` whose leaves are variables or a
constant placeholder.  It stands for every expression obtained by expanding
its leaves.  Templates are scored once (boundary eagerly, monotonicity and
parity on demand) and used to seed individuals that respect the features of
the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import expr as ex
from . import interval as iv
from .expr import Expr, Monotonicity, Parity
from .features import FeatureSet
from .interval import Interval
from .rules import COMBINERS, TraitOracle, Traits, build, derivative_flags, predict, satisfies

UNBOUND_OPS = frozenset({"add", "sub", "mul", "div", "exp", "log"})
PLACEHOLDER = ex.const(1.0)
DEFAULT_CAP = 200_000
SAMPLED_TEMPLATES = 20_000


class EnumerationTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Subspace:
    template: Expr
    boundary: Interval
    monotonicity: Monotonicity
    parity: Parity
    unbound: bool


def count_templates(d: int, h: int) -> int:
    """Number of trees of depth exactly ``h`` over ``d`` variables."""
    if h < 1:
        raise ValueError("depth must be >= 1")
    leaves = d + 1
    upto = [0, leaves]
    for _ in range(2, h + 1):
        a = upto[-1]
        upto.append(leaves + len(ex.UNARY_OPS) * a + len(ex.BINARY_OPS) * a * a)
    return upto[h] - upto[h - 1]


def _leaves(d: int) -> list[Expr]:
    return [ex.var(i) for i in range(d)] + [PLACEHOLDER]


def _exact(d: int, h: int, memo: dict) -> list[Expr]:
    if h in memo:
        return memo[h]
    if h == 1:
        out = _leaves(d)
    else:
        shallow = [t for k in range(1, h - 1) for t in _exact(d, k, memo)]
        deep = _exact(d, h - 1, memo)
        out = []
        for op in ex.BINARY_OPS:
            for a in deep + shallow:
                for b in deep + shallow:
                    if a.depth == h - 1 or b.depth == h - 1:
                        out.append(ex.Expr(op, (a, b)))
        for op in ex.UNARY_OPS:
            out.extend(ex.Expr(op, (a,)) for a in deep)
    memo[h] = out
    return out


def enumerate_templates(d: int, h: int, cap: int = DEFAULT_CAP) -> list[Expr]:
    """Every tree of depth exactly ``h``, in a fixed order."""
    n = count_templates(d, h)
    if d * n > cap:
        raise EnumerationTooLarge(
            f"{n} templates of depth {h} over {d} variables exceed the cap of {cap}; "
            "use a smaller depth or decompose into fewer variables first"
        )
    return list(_exact(d, h, {}))


def is_unbound(e: Expr) -> bool:
    """Whether some variable-to-root path passes only unbound functions."""
    if e.op == "var":
        return True
    if e.op not in UNBOUND_OPS:
        return False
    return any(is_unbound(c) for c in e.children)


def template_boundary(t: Expr, domain: Sequence[Interval], erc: Interval) -> Interval:
    if is_unbound(t):
        return iv.Entire
    return iv.iv_eval(t, domain, const_range=erc)


def evaluate_subspace(
    t: Expr, domain: Sequence[Interval], rng: np.random.Generator, erc: Interval = Interval(-5.0, 5.0)
) -> Subspace:
    """Boundary (placeholders over ``erc``), derivative-sign monotonicity and
    sampled parity (placeholders at 1)."""
    inc, dec = derivative_flags(t, domain)
    mono = Monotonicity.INCREASING if inc else Monotonicity.DECREASING if dec else Monotonicity.NONE
    oracle = TraitOracle(domain, rng, samples=64)
    return Subspace(t, template_boundary(t, domain, erc), mono, oracle.parity(t), is_unbound(t))


# --- random trees -------------------------------------------------------------


def random_erc(rng: np.random.Generator, erc: Interval) -> Expr:
    return ex.const(float(rng.uniform(erc.lo, erc.hi)))


def random_tree(d: int, max_depth: int, rng: np.random.Generator, erc: Interval, p_leaf: float = 0.3) -> Expr:
    """Grow-method random tree of depth at most ``max_depth``."""
    if max_depth <= 1 or rng.random() < p_leaf:
        k = int(rng.integers(0, d + 1))
        return ex.var(k) if k < d else random_erc(rng, erc)
    k = int(rng.integers(0, len(ex.FUNCTION_SET)))
    op = ex.FUNCTION_SET[k]
    kids = [random_tree(d, max_depth - 1, rng, erc, p_leaf) for _ in range(ex.arity(op))]
    return ex.Expr(op, kids)


def random_exact_depth(d: int, h: int, rng: np.random.Generator) -> Expr:
    """Random template of depth exactly ``h`` (placeholder leaves)."""
    if h == 1:
        k = int(rng.integers(0, d + 1))
        return ex.var(k) if k < d else PLACEHOLDER
    k = int(rng.integers(0, len(ex.FUNCTION_SET)))
    op = ex.FUNCTION_SET[k]
    if ex.arity(op) == 1:
        return ex.Expr(op, (random_exact_depth(d, h - 1, rng),))
    deep = random_exact_depth(d, h - 1, rng)
    other = random_exact_depth(d, int(rng.integers(1, h)), rng)
    kids = (deep, other) if rng.random() < 0.5 else (other, deep)
    return ex.Expr(op, kids)


def instantiate(t: Expr, rng: np.random.Generator, erc: Interval) -> Expr:
    """Replace placeholders by fresh random constants."""
    if t.op == "const":
        return random_erc(rng, erc)
    if t.is_leaf:
        return t
    return ex.Expr(t.op, [instantiate(c, rng, erc) for c in t.children])


def expand(t: Expr, d: int, rng: np.random.Generator, erc: Interval, p: float = 0.5, depth: int = 2) -> Expr:
    """Random member of the template's subspace: each leaf is kept or grown
    into a small random tree; placeholders left become constants."""
    if t.is_leaf:
        if rng.random() < p:
            return random_tree(d, depth, rng, erc)
        return random_erc(rng, erc) if t.op == "const" else t
    return ex.Expr(t.op, [expand(c, d, rng, erc, p, depth) for c in t.children])


# --- the index ----------------------------------------------------------------


class SubspaceIndex:
    """All templates for one problem with their boundaries, plus the
    terminal seeds ``x0..x(d-1)`` and ``c`` that are always admissible."""

    def __init__(
        self,
        d: int,
        domain: Sequence[Interval],
        h: int = 3,
        erc: Interval = Interval(-5.0, 5.0),
        rng: np.random.Generator | None = None,
        cap: int = DEFAULT_CAP,
        sample_size: int = SAMPLED_TEMPLATES,
    ):
        if len(domain) != d:
            raise ValueError("domain length must equal d")
        rng = np.random.default_rng(0) if rng is None else rng
        self.d, self.h, self.erc = d, h, erc
        self.domain = list(domain)
        try:
            body = enumerate_templates(d, h, cap) if h > 1 else []
            self.sampled = False
        except EnumerationTooLarge:
            seen: dict[Expr, None] = {}
            for _ in range(sample_size * 4):
                seen.setdefault(random_exact_depth(d, h, rng))
                if len(seen) >= sample_size:
                    break
            body = list(seen)
            self.sampled = True
        self.templates: list[Expr] = _leaves(d) + body
        self.n_seeds = d + 1
        bounds = [template_boundary(t, self.domain, erc) for t in body]
        self.lo = np.array([-math.inf] * self.n_seeds + [b.lo for b in bounds])
        self.hi = np.array([math.inf] * self.n_seeds + [b.hi for b in bounds])
        self.oracle = TraitOracle(self.domain, np.random.default_rng(int(rng.integers(2**32))))
        self._flags: dict[int, tuple[bool, bool]] = {}
        self._parity: dict[int, Parity] = {}

    def __len__(self) -> int:
        return len(self.templates)

    def admissible(self, boundary: Interval) -> np.ndarray:
        ok = (self.lo <= boundary.lo) & (self.hi >= boundary.hi)
        ok[: self.n_seeds] = True
        return np.flatnonzero(ok)

    def flags(self, i: int) -> tuple[bool, bool]:
        if i not in self._flags:
            self._flags[i] = derivative_flags(self.templates[i], self.domain)
        return self._flags[i]

    def parity(self, i: int) -> Parity:
        if i not in self._parity:
            self._parity[i] = self.oracle.parity(self.templates[i])
        return self._parity[i]

    def monotonicity(self, i: int) -> Monotonicity:
        inc, dec = self.flags(i)
        return Monotonicity.INCREASING if inc else Monotonicity.DECREASING if dec else Monotonicity.NONE

    def subspace(self, i: int) -> Subspace:
        t = self.templates[i]
        return Subspace(
            t, Interval(self.lo[i], self.hi[i]), self.monotonicity(i), self.parity(i), is_unbound(t)
        )

    def template_satisfies(self, i: int, F: FeatureSet) -> bool:
        if F.parity != Parity.NONE and self.parity(i) != F.parity:
            return False
        mono = F.joint_monotonicity
        if mono != Monotonicity.NONE:
            inc, dec = self.flags(i)
            return inc if mono == Monotonicity.INCREASING else dec
        return True


def _concrete_traits(e: Expr, F: FeatureSet, probe) -> Traits | None:
    """Traits of a concrete expression when it satisfies ``F``, else None."""
    par = Parity.NONE
    if F.parity != Parity.NONE:
        par = probe.parity(e)
        if par != F.parity:
            return None
    inc = dec = False
    if F.joint_monotonicity != Monotonicity.NONE:
        want_inc = F.joint_monotonicity == Monotonicity.INCREASING
        inc, dec = probe.flags(e)
        if not (inc if want_inc else dec):
            return None
    return Traits(par, inc, dec, probe.value_range(e))


def constrained(F: FeatureSet) -> bool:
    return F.parity != Parity.NONE or F.joint_monotonicity != Monotonicity.NONE


def init_individual_by_features(
    F: FeatureSet,
    idx: SubspaceIndex,
    rng: np.random.Generator,
    budget: int = 100,
    grow_probability: float = 0.5,
    probe=None,
) -> Expr:
    """A concrete expression from a subspace admissible for ``F``.

    Templates already matching the required parity/monotonicity are
    instantiated and possibly grown by one rule-guided combination; others
    are expanded at random until a member matches, up to ``budget`` tries,
    then unconstrained random trees get as many tries.  The last random
    tree is returned when nothing matched.  ``probe`` measures the
    traits of concrete candidates (interval analysis over the index domain
    by default).
    """
    probe = idx.oracle if probe is None else probe
    cand = idx.admissible(F.boundary)
    i = int(cand[rng.integers(0, len(cand))])
    t = idx.templates[i]
    if not constrained(F):
        e = instantiate(t, rng, idx.erc)
        if rng.random() < grow_probability:
            j = int(cand[rng.integers(0, len(cand))])
            op = COMBINERS[int(rng.integers(0, len(COMBINERS)))]
            e = build(op, e, instantiate(idx.templates[j], rng, idx.erc))
        return e
    if idx.template_satisfies(i, F):
        e = instantiate(t, rng, idx.erc)
        tr = _concrete_traits(e, F, probe)
        if tr is not None:
            if rng.random() < grow_probability:
                grown = _grow(e, tr, F, idx, cand, rng, probe)
                if grown is not None:
                    return grown
            return e
    for _ in range(budget):
        e = expand(t, idx.d, rng, idx.erc)
        if _concrete_traits(e, F, probe) is not None:
            return e
    # the template may be unable to match (e.g. cos of anything is never odd)
    for _ in range(budget):
        e = random_tree(idx.d, idx.h, rng, idx.erc)
        if _concrete_traits(e, F, probe) is not None:
            return e
    return e


def _grow(e: Expr, tr: Traits, F: FeatureSet, idx: SubspaceIndex, cand: np.ndarray, rng, probe) -> Expr | None:
    """Combine ``e`` with a second matching template instance by a rule that
    keeps the required classes."""
    j = int(cand[rng.integers(0, len(cand))])
    if not idx.template_satisfies(j, F):
        return None
    g = instantiate(idx.templates[j], rng, idx.erc)
    gt = _concrete_traits(g, F, probe)
    if gt is None:
        return None
    ops = list(COMBINERS)
    rng.shuffle(ops)
    for op in ops:
        if satisfies(predict(op, e, tr, g, gt, probe), F.parity, F.joint_monotonicity):
            return build(op, e, g)
    return None

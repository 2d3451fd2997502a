"""Feature-guided genetic programming loop.

Each generation builds a new population slot by slot: with probability
``alpha`` two uniformly chosen parents are recombined under the combination
rules, with probability ``beta`` a fresh individual is drawn from the
admissible subspaces, and otherwise the first parent is copied.  The best
individual ever seen is tracked separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as ex
from .data import Dataset
from .expr import Expr, Monotonicity, Parity
from .features import FeatureSet
from .interval import Entire, Interval
from .rules import COMBINERS, Traits, build, predict, satisfies, symmetric
from .subspace import SubspaceIndex, constrained, init_individual_by_features

SCALING_NODES = 4


@dataclass(frozen=True)
class EvolutionConfig:
    pop_size: int = 1000
    max_gen: int = 10000
    alpha: float = 0.7
    beta: float = 0.2
    threshold: float = 1e-5
    max_len: int = 64
    tournament_size: int = 0
    erc_range: tuple[float, float] = (-5.0, 5.0)
    seed: int = 0
    linear_scaling: bool = True
    depth: int = 3
    init_budget: int = 100

    def __post_init__(self):
        if self.pop_size < 1:
            raise ValueError("pop_size must be >= 1")
        if self.max_gen < 0:
            raise ValueError("max_gen must be >= 0")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.alpha + self.beta > 1.0 + 1e-12:
            raise ValueError("alpha + beta must not exceed 1")
        if self.threshold < 0 or math.isnan(self.threshold):
            raise ValueError("threshold must be >= 0")
        if self.max_len < 1 + (SCALING_NODES if self.linear_scaling else 0):
            raise ValueError("max_len too small")
        if self.tournament_size < 0:
            raise ValueError("tournament_size must be >= 0")
        if not self.erc_range[0] < self.erc_range[1]:
            raise ValueError("erc_range must be an increasing pair")

    @property
    def core_len(self) -> int:
        """Length limit for the evolved tree, leaving room for the scaling
        wrapper ``a + b*f``."""
        return self.max_len - (SCALING_NODES if self.linear_scaling else 0)


@dataclass(eq=False)
class Individual:
    core: Expr
    expr: Expr
    fitness: float
    traits: Traits | None = field(default=None, repr=False)

    @property
    def length(self) -> int:
        return self.expr.size


@dataclass(frozen=True)
class TraceRecord:
    generation: int
    best_rmse: float
    mean_rmse: float
    best_length: int

    def to_dict(self) -> dict:
        return {
            "generation": self.generation,
            "best_rmse": self.best_rmse,
            "mean_rmse": self.mean_rmse,
            "best_length": self.best_length,
        }


@dataclass
class EvolutionResult:
    best: Individual
    generations: int
    trace: list[TraceRecord]
    population: list[Individual]


# --- fitness ------------------------------------------------------------------


class Problem:
    """Dataset bound to a memoizing evaluator plus cheap trait probes.

    Methods assume floating-point warnings are silenced by the caller
    (``ffem_run`` does this once for the whole loop).
    """

    # values kept across cached summaries; each entry also pins its tree
    CACHE_VALUES = 2_000_000

    def __init__(self, data: Dataset, linear_scaling: bool = True, rng: np.random.Generator | None = None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.data = data
        self.y = data.y
        self._yc = data.y - data.y.mean()
        self._ymean = float(data.y.mean())
        self.linear_scaling = linear_scaling
        self.evaluate = ex.Evaluator(data.X)
        self.domain = [Interval(float(a), float(b)) for a, b in zip(data.X.min(axis=0), data.X.max(axis=0))]
        self.sym_points = ex.sample_box(symmetric(self.domain), 16, rng)
        if data.d == 1:
            order = np.argsort(data.X[:, 0], kind="stable")
            step = np.diff(data.X[order, 0]) > 0
            self._lo_idx, self._hi_idx = order[:-1][step], order[1:][step]
        else:
            n = data.n
            i = rng.integers(0, n, 20000)
            j = rng.integers(0, n, 20000)
            le = np.all(data.X[i] <= data.X[j], axis=1) & (i != j)
            self._lo_idx, self._hi_idx = i[le][:2000], j[le][:2000]
        self._summary: dict[Expr, tuple] = {}
        self._cache_limit = max(1000, self.CACHE_VALUES // max(data.n, 1))

    def summary(self, e: Expr) -> tuple[np.ndarray, float, float]:
        """Values of ``e`` on the data with their min and max (both NaN when
        any value is non-finite)."""
        hit = self._summary.get(e)
        if hit is not None:
            return hit
        f = self.evaluate.raw(e)
        lo, hi = float(f.min()), float(f.max())
        if not (math.isfinite(lo) and math.isfinite(hi)):
            lo = hi = math.nan
        if len(self._summary) >= self._cache_limit:
            self._summary.clear()
        out = self._summary[e] = (f, lo, hi)
        return out

    def score(self, core: Expr) -> tuple[Expr, float]:
        """Materialized expression and its RMSE."""
        f, lo, _ = self.summary(core)
        if lo != lo:
            return core, math.inf
        if not self.linear_scaling:
            return core, _rmse(f, self.y)
        fm = float(np.add.reduce(f)) / len(f)
        df = f - fm
        var = float(df @ df)
        if not (var > 0.0 and math.isfinite(var)):
            a, b = self._ymean, 0.0
        else:
            b = float(df @ self._yc) / var
            a = self._ymean - b * fm
        if not (math.isfinite(a) and math.isfinite(b)):
            return core, math.inf
        yhat = np.float64(a) + np.float64(b) * f
        expr = ex.add(ex.const(a), ex.mul(ex.const(b), core))
        return expr, _rmse(yhat, self.y)

    def individual(self, core: Expr, traits: Traits | None = None) -> Individual:
        expr, fit = self.score(core)
        return Individual(core, expr, fit, traits)

    # trait probes on the sample points

    def parity(self, e: Expr) -> Parity:
        return ex.parity_at(e, self.sym_points)

    def value_range(self, e: Expr) -> Interval:
        _, lo, hi = self.summary(e)
        if lo != lo:
            return Entire
        return Interval(lo, hi)

    def flags(self, e: Expr) -> tuple[bool, bool]:
        f, lo, hi = self.summary(e)
        if lo != lo or len(self._lo_idx) == 0:
            return False, False
        diff = f[self._hi_idx] - f[self._lo_idx]
        tol = 1e-9 * max(abs(lo), abs(hi), 1e-300)
        return bool(diff.min() >= -tol), bool(diff.max() <= tol)

    def traits(self, e: Expr, need_parity: bool = True) -> Traits:
        inc, dec = self.flags(e)
        par = self.parity(e) if need_parity else Parity.NONE
        return Traits(par, inc, dec, self.value_range(e))

    def flags_over(self, f: Expr, r: Interval, points: int = 32) -> tuple[bool, bool]:
        """Monotonicity of t -> f(t, ..., t) over ``r``."""
        if not r.bounded:
            return False, False
        t = np.linspace(r.lo, r.hi, points)
        vals = ex.eval_batch(f, np.repeat(t[:, None], max(f.nvars, 1), axis=1))
        if not np.isfinite(vals).all():
            return False, False
        diff = np.diff(vals)
        tol = 1e-9 * max(float(np.abs(vals).max()), 1e-300)
        return bool(diff.min() >= -tol), bool(diff.max() <= tol)


def _rmse(yhat: np.ndarray, y: np.ndarray) -> float:
    r = yhat - y
    v = math.sqrt(float(r @ r) / len(r)) if len(r) else 0.0
    return v if math.isfinite(v) else math.inf


# --- selection ----------------------------------------------------------------


def _better(a: Individual, b: Individual) -> bool:
    return a.fitness < b.fitness or (a.fitness == b.fitness and a.length < b.length)


def select_best(pop: Sequence[Individual]) -> Individual:
    """Lowest RMSE; ties go to the shorter, then the earlier individual."""
    if not pop:
        raise ValueError("empty population")
    best = pop[0]
    for ind in pop[1:]:
        if _better(ind, best):
            best = ind
    return best


# --- pruning ------------------------------------------------------------------


def _split_term(node: Expr, sign: float) -> tuple[float, Expr | None]:
    if node.op == "const":
        return sign * node.arg, None
    if node.op == "mul":
        a, b = node.children
        if a.op == "const":
            return sign * a.arg, b
        if b.op == "const":
            return sign * b.arg, a
    return sign, node


def collect_like_terms(e: Expr) -> Expr:
    """Merge repeated terms ``c*u`` of the top-level sum and fold its
    constants; returns ``e`` unchanged unless the result is shorter."""
    if e.op not in ("add", "sub"):
        return e
    terms: list[tuple[float, Expr | None]] = []
    stack = [(e, 1.0)]
    while stack:
        node, s = stack.pop()
        if node.op == "add":
            stack.append((node.children[1], s))
            stack.append((node.children[0], s))
        elif node.op == "sub":
            stack.append((node.children[1], -s))
            stack.append((node.children[0], s))
        else:
            terms.append(_split_term(node, s))
    groups: dict[Expr | None, float] = {}
    for c, base in terms:
        groups[base] = groups.get(base, 0.0) + c
    if len(groups) == len(terms):
        return e
    out: Expr | None = None
    for base, c in groups.items():
        if base is None:
            continue
        if c == 0.0:
            continue
        term = base if c == 1.0 else ex.mul(ex.const(c), base)
        out = term if out is None else ex.add(out, term)
    c0 = groups.get(None, 0.0)
    if out is None:
        out = ex.const(c0)
    elif c0 != 0.0:
        out = ex.add(out, ex.const(c0))
    return out if out.size < e.size else e


def _deepest_nonleaf(e: Expr, min_size: int = 2) -> list[tuple[int, ...]]:
    """Paths of the non-leaf subtrees of size >= ``min_size`` lying deepest."""
    best_depth, found = -1, []
    stack: list[tuple[tuple[int, ...], Expr]] = [((), e)]
    while stack:
        path, node = stack.pop()
        if node.is_leaf or node.size < min_size:
            continue
        deeper = [(path + (i,), c) for i, c in enumerate(node.children) if not c.is_leaf and c.size >= min_size]
        if deeper:
            stack.extend(reversed(deeper))
            continue
        if len(path) > best_depth:
            best_depth, found = len(path), [path]
        elif len(path) == best_depth:
            found.append(path)
    return found


def _node(e: Expr, path) -> Expr:
    for i in path:
        e = e.children[i]
    return e


class Pruner:
    """Shrinks trees by swapping subtrees for class-preserving stand-ins:
    an odd subtree becomes one of its variables, an even or bounded one a
    constant inside its range; an unbounded subtree is replaced by a child.
    """

    def __init__(self, problem: Problem | None, parity: Parity = Parity.NONE, mono: Monotonicity = Monotonicity.NONE, gentle: int = 4):
        self.problem = problem
        self.need_parity = parity != Parity.NONE
        self.need_mono = mono != Monotonicity.NONE
        self.gentle = gentle

    def _range(self, sub: Expr, sym: bool = False) -> Interval:
        if self.problem is None:
            pts = np.linspace(-1.0, 1.0, 16)[:, None].repeat(max(sub.nvars, 1), axis=1)
            f = ex.eval_batch(sub, pts)
            if not np.all(np.isfinite(f)):
                return Entire
            return Interval(float(f.min()), float(f.max()))
        return self.problem.value_range(sub)

    def _parity(self, sub: Expr) -> Parity:
        if self.problem is None:
            pts = np.linspace(0.1, 1.0, 16)[:, None].repeat(max(sub.nvars, 1), axis=1)
            return ex.parity_at(sub, pts)
        return self.problem.parity(sub)

    def stand_in(self, sub: Expr) -> Expr:
        r = self._range(sub)
        mid = ex.const(0.5 * (r.lo + r.hi)) if r.bounded else None
        if self.need_parity and sub.nvars and self._parity(sub) == Parity.ODD:
            return next(n for n in sub.walk() if n.op == "var")
        if mid is not None:
            return mid
        return max(sub.children, key=lambda c: c.size)

    def __call__(self, e: Expr, max_len: int, rng: np.random.Generator | None = None) -> Expr:
        with np.errstate(all="ignore"):
            return self._shrink(e, max_len, rng)

    def _shrink(self, e: Expr, max_len: int, rng) -> Expr:
        while e.size > max_len:
            excess = e.size - max_len
            paths = _deepest_nonleaf(e, 2 if excess <= self.gentle else excess + 1)
            if not paths:
                paths = _deepest_nonleaf(e)
            options = []
            for p in paths:
                sub = _node(e, p)
                s = self.stand_in(sub)
                removed = sub.size - s.size
                if removed > 0:
                    options.append((removed, p, s))
            if not options:
                # nothing shrinks at the bottom: hoist the largest root child
                e = max(e.children, key=lambda c: c.size)
                continue
            gentlest = min(o[0] for o in options)
            picks = [o for o in options if o[0] == gentlest]
            k = 0 if rng is None or len(picks) == 1 else int(rng.integers(0, len(picks)))
            _, path, s = picks[k]
            e = collect_like_terms(ex.replace_at(e, path, s))
        return e


def prune(
    e: Expr,
    max_len: int,
    parity: Parity = Parity.NONE,
    mono: Monotonicity = Monotonicity.NONE,
    rng: np.random.Generator | None = None,
    problem: Problem | None = None,
) -> Expr:
    """Shrink ``e`` to at most ``max_len`` nodes while keeping the required
    parity/monotonicity class (see :class:`Pruner`)."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    return Pruner(problem, parity, mono)(e, max_len, rng)


# --- variation ----------------------------------------------------------------


def _nth(e: Expr, k: int) -> tuple[int, ...]:
    """Path of the k-th node in pre-order."""
    path = []
    while k:
        k -= 1
        for i, c in enumerate(e.children):
            if k < c.size:
                path.append(i)
                e = c
                break
            k -= c.size
    return tuple(path)


def crossover(p1: Expr, p2: Expr, rng: np.random.Generator) -> Expr:
    """Replace a random subtree of ``p1`` by a random subtree of ``p2``."""
    a = _nth(p1, int(rng.integers(0, p1.size)))
    b = _nth(p2, int(rng.integers(0, p2.size)))
    return ex.replace_at(p1, a, _node(p2, b))


def recombine_by_features(
    p1: Individual,
    p2: Individual,
    F: FeatureSet,
    problem: Problem,
    rng: np.random.Generator,
    max_len: int,
    pruner: Pruner | None = None,
) -> Expr:
    """Combine two parents by a rule whose predicted class matches ``F``;
    subtree crossover when ``F`` asks for nothing or no rule fits."""
    with np.errstate(all="ignore"):
        return _recombine(p1, p2, F, problem, rng, max_len, pruner)


def _recombine(p1, p2, F, problem, rng, max_len, pruner) -> Expr:
    child = None
    if constrained(F):
        need_parity = F.parity != Parity.NONE
        for ind in (p1, p2):
            if ind.traits is None:
                ind.traits = problem.traits(ind.core, need_parity)
        ops = list(COMBINERS)
        rng.shuffle(ops)
        for op in ops:
            pt = predict(op, p1.core, p1.traits, p2.core, p2.traits, problem)
            if satisfies(pt, F.parity, F.joint_monotonicity):
                child = build(op, p1.core, p2.core)
                break
    if child is None:
        child = crossover(p1.core, p2.core, rng)
    if child.size > max_len:
        pruner = pruner or Pruner(problem, F.parity, F.joint_monotonicity)
        child = pruner._shrink(child, max_len, rng)
    return child


# --- the loop -----------------------------------------------------------------


def ffem_run(
    data: Dataset,
    F: FeatureSet,
    cfg: EvolutionConfig,
    rng: np.random.Generator,
    idx: SubspaceIndex | None = None,
    threshold: float | None = None,
    max_gen: int | None = None,
) -> EvolutionResult:
    """Evolve until the best RMSE reaches the threshold or generations run
    out.  ``threshold`` and ``max_gen`` override the config values."""
    with np.errstate(all="ignore"):
        return _run(data, F, cfg, rng, idx, threshold, max_gen)


def _run(data, F, cfg, rng, idx, threshold, max_gen) -> EvolutionResult:
    threshold = cfg.threshold if threshold is None else threshold
    max_gen = cfg.max_gen if max_gen is None else max_gen
    erc = Interval(*cfg.erc_range)
    problem = Problem(data, cfg.linear_scaling, np.random.default_rng(int(rng.integers(2**32))))
    if idx is None:
        idx = SubspaceIndex(data.d, problem.domain, cfg.depth, erc, np.random.default_rng(int(rng.integers(2**32))))
    pruner = Pruner(problem, F.parity, F.joint_monotonicity)
    limit = cfg.core_len
    N = cfg.pop_size

    def fresh() -> Individual:
        e = init_individual_by_features(F, idx, rng, cfg.init_budget, probe=problem)
        if e.size > limit:
            e = pruner._shrink(e, limit, rng)
        return problem.individual(e)

    pop = [fresh() for _ in range(N)]
    best = select_best(pop)
    trace = [_record(0, best, pop)]
    g = 0
    while best.fitness > threshold and g < max_gen:
        draws = rng.random(N)
        picks = rng.integers(0, N, (N, 2))
        nxt: list[Individual] = []
        for s in range(N):
            p1 = _pick(pop, int(picks[s, 0]), cfg.tournament_size, rng)
            r = draws[s]
            if r < cfg.alpha:
                p2 = _pick(pop, int(picks[s, 1]), cfg.tournament_size, rng)
                child = _recombine(p1, p2, F, problem, rng, limit, pruner)
                nxt.append(problem.individual(child))
            elif r < cfg.alpha + cfg.beta:
                nxt.append(fresh())
            else:
                nxt.append(p1)
        pop = nxt
        g += 1
        gen_best = select_best(pop)
        if _better(gen_best, best):
            best = gen_best
        trace.append(_record(g, best, pop))
    return EvolutionResult(best, g, trace, pop)


def _pick(pop: list[Individual], k: int, tournament: int, rng: np.random.Generator) -> Individual:
    if tournament <= 1:
        return pop[k]
    others = rng.integers(0, len(pop), tournament - 1)
    cand = [pop[k]] + [pop[int(i)] for i in others]
    return select_best(cand)


def _record(g: int, best: Individual, pop: list[Individual]) -> TraceRecord:
    fits = np.array([p.fitness for p in pop])
    finite = fits[np.isfinite(fits)]
    mean = float(finite.mean()) if finite.size else math.inf
    return TraceRecord(g, best.fitness, mean, best.length)


def top_individuals(pop: Sequence[Individual], best: Individual, m: int) -> list[Individual]:
    """Up to ``m`` distinct expressions, best first."""
    ranked = sorted(pop, key=lambda i: (i.fitness, i.length))
    out, seen = [best], {best.core}
    for ind in ranked:
        if len(out) >= m:
            break
        if ind.core not in seen and math.isfinite(ind.fitness):
            seen.add(ind.core)
            out.append(ind)
    return out

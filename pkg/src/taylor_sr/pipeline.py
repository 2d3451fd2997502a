"""End-to-end driver: fit, decompose, solve each part, assemble.

A run fits a Taylor polynomial to the data and reads its features.  A
polynomial that already fits the data ends the run at generation 0.  Otherwise
separable variable groups become subproblems whose targets are the group's
share of the polynomial; each subproblem is either low-order itself or is
handed to the evolutionary search, and the top candidates of every group are
joined back into full equations.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as ex
from . import metrics
from .data import Dataset
from .expr import Expr
from .features import FeatureSet, Partition, extract_features, is_low_order, log_fit
from .ffem import EvolutionConfig, TraceRecord, ffem_run, top_individuals
from .taylor import FitConfig, FitError, TaylorPoly, fit_taylor, poly_eval_batch, poly_to_expr

ADDITIVE = "additive"
MULTIPLICATIVE = "multiplicative"


@dataclass(frozen=True)
class TaylorGPConfig:
    evolution: EvolutionConfig = EvolutionConfig()
    fit: FitConfig = FitConfig()
    top_m: int = 3

    def __post_init__(self):
        if self.top_m < 1:
            raise ValueError("top_m must be >= 1")

    @property
    def threshold(self) -> float:
        return self.evolution.threshold


@dataclass
class Subproblem:
    """One variable group with its target.

    ``data`` holds the group's columns; its ``y`` is the group polynomial
    evaluated at the samples, or the original target when the task was not
    split (``surrogate`` False).
    """

    group: tuple[int, ...]
    target: TaylorPoly | None
    data: Dataset
    context: str = ADDITIVE
    surrogate: bool = True


@dataclass
class SubResult:
    group: tuple[int, ...]
    candidates: list[Expr]
    low_order: bool
    generations: int = 0
    trace: list[TraceRecord] = field(default_factory=list)
    features: FeatureSet | None = None


@dataclass
class RunResult:
    expression: Expr
    rmse: float
    r2: float
    generations: int
    wall_ms: float
    features: FeatureSet | None
    poly: TaylorPoly | None
    context: str
    subresults: list[SubResult]
    seed: int | None = None
    fallback: bool = False

    @property
    def text(self) -> str:
        return ex.format_expr(self.expression)

    @property
    def low_order_exit(self) -> bool:
        return self.generations == 0 and all(s.low_order for s in self.subresults)

    def trace(self) -> list[dict]:
        out = []
        for i, s in enumerate(self.subresults):
            for rec in s.trace:
                out.append({"subproblem": i, **rec.to_dict()})
        return out


# --- decomposition ------------------------------------------------------------


def group_poly(p: TaylorPoly, group: Sequence[int], with_constant: bool) -> TaylorPoly:
    """Monomials of ``p`` supported on ``group`` in the group's own variable
    order, optionally with the constant term."""
    vs = list(group)
    outside = [t for t in range(p.dim) if t not in vs]
    coeffs = {}
    for e, c in p.coeffs.items():
        if any(e[t] for t in outside):
            continue
        if sum(e) == 0 and not with_constant:
            continue
        coeffs[tuple(e[t] for t in vs)] = c
    return TaylorPoly(p.center[vs].copy(), coeffs, p.order, p.condition)


def split(p: TaylorPoly, partition: Partition, data: Dataset, context: str = ADDITIVE) -> list[Subproblem]:
    """One subproblem per group; the constant goes to the group listed first."""
    out = []
    for k, g in enumerate(sorted(partition, key=min)):
        t = group_poly(p, g, with_constant=k == 0)
        Xg = data.X[:, list(g)]
        names = [data.names[i] for i in g]
        sub = Dataset(Xg, poly_eval_batch(t, Xg), names, data.target)
        out.append(Subproblem(tuple(g), t, sub, context))
    return out


def decompose(
    p: TaylorPoly,
    F: FeatureSet,
    data: Dataset,
    log_poly: TaylorPoly | None = None,
) -> list[Subproblem]:
    """Subproblems from the additive partition, else the multiplicative one
    applied to ``log_poly`` (the fit of ``ln|y|``), else the whole task."""
    if len(F.additive_partition) > 1:
        return split(p, F.additive_partition, data, ADDITIVE)
    mp = F.multiplicative_partition
    if mp is not None and len(mp) > 1 and log_poly is not None:
        return split(log_poly, mp, data, MULTIPLICATIVE)
    return [Subproblem(tuple(range(data.d)), p, data, ADDITIVE, surrogate=False)]


# --- assembly -----------------------------------------------------------------


def _globalize(e: Expr, group: Sequence[int]) -> Expr:
    return ex.remap(e, {i: g for i, g in enumerate(group)})


def _sum(terms: Sequence[Expr]) -> Expr:
    out = terms[0]
    for t in terms[1:]:
        out = ex.add(out, t)
    return out


def join(parts: Sequence[Expr], context: str, sign: float = 1.0) -> Expr:
    """Sum of the parts, or ``sign*exp(sum)`` for log-domain parts."""
    total = _sum(parts)
    if context == MULTIPLICATIVE:
        total = ex.exp(total)
        if sign != 1.0:
            total = ex.mul(ex.const(sign), total)
    return total


def _refit(parts: Sequence[Expr], context: str, data: Dataset, sign: float) -> Expr | None:
    """``c0 + sum(b_i * part_i)`` with least-squares weights (in the log
    domain for multiplicative parts)."""
    cols = [ex.eval_batch(e, data.X) for e in parts]
    if not all(np.all(np.isfinite(c)) for c in cols):
        return None
    target = data.y
    if context == MULTIPLICATIVE:
        if not np.all(sign * data.y > 0):
            return None
        target = np.log(np.abs(data.y))
    A = np.column_stack([np.ones(data.n)] + cols)
    sol, *_ = np.linalg.lstsq(A, target, rcond=None)
    if not np.all(np.isfinite(sol)):
        return None
    terms = [ex.mul(ex.const(float(b)), e) for b, e in zip(sol[1:], parts)]
    total = ex.add(ex.const(float(sol[0])), _sum(terms))
    if context == MULTIPLICATIVE:
        total = ex.exp(total)
        if sign != 1.0:
            total = ex.mul(ex.const(sign), total)
    return total


def _score(e: Expr, data: Dataset) -> float:
    with np.errstate(all="ignore"):
        return metrics.rmse(ex.eval_batch(e, data.X), data.y)


def assemble(
    subresults: Sequence[tuple[Sequence[int], Sequence[Expr]]],
    context: str,
    data: Dataset,
    sign: float = 1.0,
    refit: bool = True,
) -> tuple[Expr, float]:
    """Best full-data equation over the cross product of group candidates.

    Candidates use their group's local variable indices.  With ``refit``
    every combination is also tried with least-squares part weights.
    """
    if not subresults or any(len(c) == 0 for _, c in subresults):
        raise ValueError("every group needs at least one candidate")
    pools = [[_globalize(e, g) for e in cands] for g, cands in subresults]
    best, best_rmse = None, math.inf
    for combo in itertools.product(*pools):
        options = [join(combo, context, sign)]
        if refit and (len(combo) > 1 or context == MULTIPLICATIVE):
            r = _refit(combo, context, data, sign)
            if r is not None:
                options.append(r)
        for e in options:
            v = _score(e, data)
            if best is None or v < best_rmse or (v == best_rmse and e.size < best.size):
                best, best_rmse = e, v
    return best, best_rmse


# --- the driver ---------------------------------------------------------------


def _surrogate_rmse(p: TaylorPoly, data: Dataset) -> float:
    with np.errstate(all="ignore"):
        return metrics.rmse(poly_eval_batch(p, data.X), data.y)


def _solve_low_order(sub: Subproblem, cfg: TaylorGPConfig, threshold: float) -> Expr | None:
    """Refitted polynomial when the subproblem's target is low-order.

    The degree is read from the target polynomial itself: a fresh local fit
    of the synthetic data would put roundoff into its high-order terms.
    The refit is checked against that same polynomial, so the RMSE gate is
    weak here; a parity-alternating series leaves its top degree empty, so
    the degree must also sit two below the fit order.
    """
    hit = is_low_order(sub.target, sub.data, cfg.fit.coef_eps, threshold)
    if hit is None or hit[0] >= sub.target.order - 1:
        return None
    return poly_to_expr(hit[1])


def taylorgp(data: Dataset, cfg: TaylorGPConfig = TaylorGPConfig(), rng: np.random.Generator | None = None, seed: int | None = None) -> RunResult:
    """Run the whole method on ``data``.

    ``rng`` defaults to a generator seeded with ``seed`` (or
    ``cfg.evolution.seed``); the result is a pure function of the data,
    the config and that seed.
    """
    if data.n == 0:
        raise ValueError("empty dataset")
    if rng is None:
        seed = cfg.evolution.seed if seed is None else seed
        rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    threshold = cfg.threshold
    try:
        p, F = extract_features(data, cfg.fit, threshold, rng)
    except (FitError, ValueError):
        return _fallback(data, cfg, rng, t0, seed)

    if F.low_order_poly is not None:
        e = poly_to_expr(F.low_order_poly)
        sub = SubResult(tuple(range(data.d)), [e], True, features=F)
        return _result(e, data, 0, t0, F, p, ADDITIVE, [sub], seed)

    lf = None
    if len(F.additive_partition) == 1:
        lf = log_fit(data, cfg.fit)
    subs = decompose(p, F, data, None if lf is None else lf.poly)
    context = subs[0].context
    sign = lf.sign if (lf is not None and context == MULTIPLICATIVE) else 1.0

    # a split target can only be matched to within the surrogate's own error
    sub_threshold = threshold
    if subs[0].surrogate:
        surrogate = lf.poly if context == MULTIPLICATIVE else p
        ref = data if context == ADDITIVE else Dataset(data.X, np.log(np.abs(data.y)), data.names, data.target)
        sub_threshold = max(threshold, _surrogate_rmse(surrogate, ref))

    results: list[SubResult | None] = []
    for sub in subs:
        e = _solve_low_order(sub, cfg, sub_threshold) if sub.surrogate else None
        results.append(None if e is None else SubResult(sub.group, [e], True))
    todo = [k for k, r in enumerate(results) if r is None]
    share = cfg.evolution.max_gen // len(todo) if todo else 0
    for k in todo:
        results[k] = _evolve(subs[k], F, cfg, rng, sub_threshold, share)

    expr, err = assemble([(r.group, r.candidates) for r in results], context, data, sign)
    gens = sum(r.generations for r in results)
    # a low-order part only counts when the whole equation meets the threshold
    lows = [k for k, r in enumerate(results) if r.low_order]
    if err >= threshold and lows and gens < cfg.evolution.max_gen:
        share = (cfg.evolution.max_gen - gens) // len(lows)
        for k in lows:
            r = _evolve(subs[k], F, cfg, rng, sub_threshold, share)
            r.candidates = results[k].candidates + [c for c in r.candidates if c not in results[k].candidates]
            results[k] = r
        expr, _ = assemble([(r.group, r.candidates) for r in results], context, data, sign)
        gens = sum(r.generations for r in results)
    return _result(expr, data, gens, t0, F, p, context, results, seed)


def _evolve(sub: Subproblem, F: FeatureSet, cfg: TaylorGPConfig, rng, threshold: float, max_gen: int) -> SubResult:
    if sub.surrogate:
        try:
            _, F = extract_features(sub.data, cfg.fit, threshold, rng)
        except (FitError, ValueError):
            F = FeatureSet.unconstrained(sub.data.d)
    res = ffem_run(sub.data, F, cfg.evolution, rng, threshold=threshold, max_gen=max_gen)
    cands = [ind.expr for ind in top_individuals(res.population, res.best, cfg.top_m)]
    return SubResult(sub.group, cands, False, res.generations, res.trace, F)


def _fallback(data: Dataset, cfg: TaylorGPConfig, rng, t0: float, seed) -> RunResult:
    F = FeatureSet.unconstrained(data.d)
    sub = Subproblem(tuple(range(data.d)), None, data, ADDITIVE, surrogate=False)
    r = _evolve(sub, F, cfg, rng, cfg.threshold, cfg.evolution.max_gen)
    expr, _ = assemble([(r.group, r.candidates)], ADDITIVE, data)
    out = _result(expr, data, r.generations, t0, None, None, ADDITIVE, [r], seed)
    out.fallback = True
    return out


def _result(e: Expr, data: Dataset, gens: int, t0: float, F, p, context, subs, seed) -> RunResult:
    with np.errstate(all="ignore"):
        yhat = ex.eval_batch(e, data.X)
    r2 = metrics.r2(yhat, data.y) if data.n >= 2 else math.nan
    return RunResult(
        expression=e,
        rmse=metrics.rmse(yhat, data.y),
        r2=r2,
        generations=gens,
        wall_ms=(time.perf_counter() - t0) * 1000.0,
        features=F,
        poly=p,
        context=context,
        subresults=list(subs),
        seed=seed,
    )

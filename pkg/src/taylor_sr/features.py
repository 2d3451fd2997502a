"""Structural features of the unknown target read off a Taylor polynomial.

Five extractors: low-order polynomiality, additive/multiplicative
separability, value boundary, monotonicity and parity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import interval as iv
from .data import Dataset
from .expr import Monotonicity, Parity
from .interval import Interval
from .metrics import RECOVERY_THRESHOLD, rmse
from .taylor import (
    FitConfig,
    FitError,
    TaylorPoly,
    fit_taylor,
    monomials,
    poly_eval_batch,
    refit_coefficients,
    shift_center,
    truncate,
)

Partition = tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class FeatureSet:
    """Search-guidance record for one (sub)problem."""

    boundary: Interval
    additive_partition: Partition
    multiplicative_partition: Partition | None = None
    monotonicity: tuple[Monotonicity, ...] = ()
    joint_monotonicity: Monotonicity = Monotonicity.NONE
    parity: Parity = Parity.NONE
    low_order_degree: int | None = None
    low_order_poly: TaylorPoly | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        d = sum(len(g) for g in self.additive_partition)
        for part in (self.additive_partition, self.multiplicative_partition):
            if part is not None and sorted(v for g in part for v in g) != list(range(d)):
                raise ValueError(f"partition {part} does not cover 0..{d - 1} exactly once")

    @property
    def d(self) -> int:
        return sum(len(g) for g in self.additive_partition)

    @classmethod
    def unconstrained(cls, d: int) -> FeatureSet:
        return cls(
            boundary=iv.Entire,
            additive_partition=(tuple(range(d)),),
            monotonicity=(Monotonicity.NONE,) * d,
        )

    def to_dict(self) -> dict:
        return {
            "low_order_degree": self.low_order_degree,
            "additive_partition": [list(g) for g in self.additive_partition],
            "multiplicative_partition": (
                None
                if self.multiplicative_partition is None
                else [list(g) for g in self.multiplicative_partition]
            ),
            "boundary": [_json_float(self.boundary.lo), _json_float(self.boundary.hi)],
            "monotonicity": {
                "per_variable": [m.value for m in self.monotonicity],
                "joint": self.joint_monotonicity.value,
            },
            "parity": self.parity.value,
        }


def _json_float(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def data_domain(data: Dataset) -> list[Interval]:
    return [Interval(float(lo), float(hi)) for lo, hi in zip(data.X.min(axis=0), data.X.max(axis=0))]


# --- low order --------------------------------------------------------------


def is_low_order(
    p: TaylorPoly,
    data: Dataset,
    eps: float = 1e-4,
    threshold: float = RECOVERY_THRESHOLD,
) -> tuple[int, TaylorPoly] | None:
    """Degree and full-data refit when ``p`` looks like a low-order polynomial.

    The degree is read in the local coordinates of ``p``.  Coefficients about
    the origin are then refitted on every monomial up to that degree, small
    ones dropped and the rest refitted again.  The result is returned only
    if its RMSE over ``data`` is below ``threshold``.
    """
    degree = _cutoff_degree(p, eps)
    if degree is None:
        return None
    try:
        full = refit_coefficients(monomials(data.d, degree), data)
    except FitError:
        return None
    best = full
    kept = [e for e, c in full.coeffs.items() if abs(c) >= eps]
    if len(kept) < len(full):
        try:
            sparse = refit_coefficients(kept, data)
        except FitError:
            sparse = None
        if sparse is not None and _poly_rmse(sparse, data) < threshold:
            best = sparse
    if _poly_rmse(best, data) >= threshold:
        return None
    return degree, best


def _cutoff_degree(p: TaylorPoly, eps: float) -> int | None:
    big = [sum(e) for e, c in p.coeffs.items() if abs(c) >= eps]
    degree = max(big, default=0)
    return degree if degree < p.order else None


def _poly_rmse(p: TaylorPoly, data: Dataset) -> float:
    return rmse(poly_eval_batch(p, data.X), data.y)


# --- separability -----------------------------------------------------------


def additive_partition(p: TaylorPoly, eps: float = 1e-4) -> Partition:
    """Connected components of the graph linking variables that share a
    monomial with ``|c| >= eps``."""
    parent = list(range(p.dim))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e, c in p.coeffs.items():
        if not abs(c) >= eps:
            continue
        used = [t for t, q in enumerate(e) if q]
        for t in used[1:]:
            ra, rb = find(used[0]), find(t)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for t in range(p.dim):
        groups.setdefault(find(t), []).append(t)
    return tuple(tuple(g) for g in sorted(groups.values()))


@dataclass(frozen=True)
class LogFit:
    """Taylor polynomial of ``ln|y|`` for single-signed targets."""

    poly: TaylorPoly
    sign: float
    partition: Partition


def log_fit(data: Dataset, cfg: FitConfig = FitConfig()) -> LogFit | None:
    if np.all(data.y > 0):
        sign = 1.0
    elif np.all(data.y < 0):
        sign = -1.0
    else:
        return None
    logged = Dataset(data.X, np.log(np.abs(data.y)), data.names, data.target)
    try:
        p = fit_taylor(logged, cfg)
    except FitError:
        return None
    return LogFit(p, sign, additive_partition(p, cfg.coef_eps))


def multiplicative_partition(data: Dataset, cfg: FitConfig = FitConfig()) -> Partition | None:
    """Additive partition of ``ln|y|`` when it has more than one group."""
    lf = log_fit(data, cfg)
    if lf is None or len(lf.partition) < 2:
        return None
    return lf.partition


# --- boundary ---------------------------------------------------------------


def boundary(p: TaylorPoly, domain: Sequence[Interval], y=None) -> Interval:
    """Interval enclosure of ``p`` over ``domain``, widened to cover ``y``."""
    local = [iv.iv_sub(dom, float(c)) for dom, c in zip(domain, p.center)]
    total = Interval(0.0, 0.0)
    for e, c in p.terms():
        term = Interval(c, c)
        for t, q in enumerate(e):
            if q:
                term = iv.iv_mul(term, iv.iv_pow_nat(local[t], q))
        total = iv.iv_add(total, term)
    if y is not None and len(y):
        total = iv.iv_union(total, Interval(float(np.min(y)), float(np.max(y))))
    return total


# --- monotonicity -----------------------------------------------------------

_MAX_PAIR_ROWS = 512
_MAX_NEIGHBOR_ROWS = 2000


def _classify(dy: np.ndarray, tol: float) -> Monotonicity:
    if dy.size == 0:
        return Monotonicity.NONE
    if np.all(dy >= -tol):
        return Monotonicity.INCREASING
    if np.all(dy <= tol):
        return Monotonicity.DECREASING
    return Monotonicity.NONE


def monotonicity_from_data(
    data: Dataset, tol: float = 1e-8, rng: np.random.Generator | None = None
) -> tuple[tuple[Monotonicity, ...], Monotonicity]:
    """Per-variable and joint monotonicity classes observed in the samples.

    ``tol`` is relative to the spread of ``y``.  A constant target counts as
    increasing.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    X, y = data.X, data.y
    atol = tol * max(float(np.ptp(y)), float(np.max(np.abs(y))), 1e-300)
    joint = _joint(X, y, atol, rng)
    if data.d == 1:
        order = np.argsort(X[:, 0], kind="stable")
        xs, ys = X[order, 0], y[order]
        moved = np.diff(xs) > 0
        per = (_classify(np.diff(ys)[moved], atol),)
        return per, per[0]
    return tuple(_per_variable(X, y, t, atol, rng) for t in range(data.d)), joint


def _joint(X, y, atol, rng) -> Monotonicity:
    n = len(y)
    if n <= _MAX_PAIR_ROWS:
        i, j = np.triu_indices(n, k=1)
    else:
        i = rng.integers(0, n, _MAX_PAIR_ROWS**2)
        j = rng.integers(0, n, _MAX_PAIR_ROWS**2)
    dX = X[i] - X[j]
    ge = np.all(dX >= 0, axis=1)
    le = np.all(dX <= 0, axis=1)
    dy = np.concatenate([(y[i] - y[j])[ge], (y[j] - y[i])[le & ~ge]])
    return _classify(dy, atol)


def _per_variable(X, y, t, atol, rng, neighbors: int = 5, ratio: float = 10.0) -> Monotonicity:
    n = len(y)
    rows = np.arange(n) if n <= _MAX_NEIGHBOR_ROWS else rng.choice(n, _MAX_NEIGHBOR_ROWS, replace=False)
    Xs, ys = X[rows], y[rows]
    others = np.delete(Xs, t, axis=1)
    dist = np.sqrt(((others[:, None, :] - others[None, :, :]) ** 2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    k = min(neighbors, len(rows) - 1)
    if k < 1:
        return Monotonicity.NONE
    nb = np.argpartition(dist, k - 1, axis=1)[:, :k]
    i = np.repeat(np.arange(len(rows)), k)
    j = nb.reshape(-1)
    dx = Xs[j, t] - Xs[i, t]
    keep = np.abs(dx) > ratio * dist[i, j]
    dy = (ys[j] - ys[i])[keep] * np.sign(dx[keep])
    return _classify(dy, atol)


# --- parity -----------------------------------------------------------------


def parity_from_coefficients(p: TaylorPoly, eps: float = 1e-4) -> Parity:
    """Odd if every surviving non-constant term has odd degree, even if every
    one has even degree.  ``p`` must be expanded about the origin."""
    degrees = {sum(e) % 2 for e, c in p.coeffs.items() if sum(e) > 0 and abs(c) >= eps}
    if degrees == {1}:
        return Parity.ODD
    if degrees <= {0}:
        return Parity.EVEN
    return Parity.NONE


def parity_of_poly(data: Dataset, cfg: FitConfig = FitConfig(), eps: float | None = None) -> Parity:
    """Parity of the target from a Taylor polynomial about the origin.

    Undefined (``none``) unless the samples bracket the origin in every
    coordinate.
    """
    eps = cfg.coef_eps if eps is None else eps
    if not (np.all(data.X.min(axis=0) < 0) and np.all(data.X.max(axis=0) > 0)):
        return Parity.NONE
    ci = int(np.argmin(np.sum(data.X**2, axis=1)))
    try:
        p = fit_taylor(data, cfg, center_index=ci)
    except FitError:
        return Parity.NONE
    return parity_from_coefficients(shift_center(p, np.zeros(data.d)), eps)


# --- everything -------------------------------------------------------------


def extract_features(
    data: Dataset,
    cfg: FitConfig = FitConfig(),
    threshold: float = RECOVERY_THRESHOLD,
    rng: np.random.Generator | None = None,
) -> tuple[TaylorPoly, FeatureSet]:
    """Fit the central Taylor polynomial and run all five extractors."""
    p = fit_taylor(data, cfg)
    low = is_low_order(p, data, cfg.coef_eps, threshold)
    per, joint = monotonicity_from_data(data, rng=rng)
    feats = FeatureSet(
        boundary=boundary(p, data_domain(data), data.y),
        additive_partition=additive_partition(p, cfg.coef_eps),
        multiplicative_partition=multiplicative_partition(data, cfg),
        monotonicity=per,
        joint_monotonicity=joint,
        parity=parity_of_poly(data, cfg),
        low_order_degree=None if low is None else low[0],
        low_order_poly=None if low is None else low[1],
    )
    return p, feats


def truncated_terms(p: TaylorPoly, eps: float, limit: int = 10) -> list[dict]:
    """Largest coefficients of ``p`` for reports."""
    kept = sorted(truncate(p, eps).coeffs.items(), key=lambda kv: -abs(kv[1]))
    return [{"exponents": list(e), "coefficient": c} for e, c in kept[:limit]]

"""Multivariate Taylor polynomials recovered from samples.

A polynomial is stored sparsely as ``{exponent tuple: coefficient}`` in
powers of ``(x - center)``.  Fitting solves the derivative system built from
the samples nearest a central sample in least squares on equilibrated
columns, with optional ridge damping, instead of an exact inverse.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import expr as ex
from .data import Dataset

Monomial = tuple[int, ...]


class FitError(RuntimeError):
    """The linear system could not be solved to a usable polynomial."""

    def __init__(self, message: str, condition: float = math.inf):
        super().__init__(f"{message} (condition estimate {condition:.3g})")
        self.condition = condition


@dataclass(frozen=True)
class FitConfig:
    """Settings for polynomial recovery.

    ``k_max=None`` selects the order cap from the dimensionality:
    18 (d=1), 8 (d=2,3), 4 (d=4), 3 (d=5), 2 (d>5).  ``ridge`` damps the
    column-equilibrated system; any positive value visibly biases the
    high-order coefficients, so it is off unless the data is noisy.
    """

    k_max: int | None = None
    oversample: float = 1.5
    ridge: float = 0.0
    coef_eps: float = 1e-4

    def __post_init__(self):
        if self.k_max is not None and self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.oversample < 1:
            raise ValueError("oversample must be >= 1")
        if self.ridge < 0 or self.coef_eps < 0:
            raise ValueError("ridge and coef_eps must be >= 0")

    def order_cap(self, d: int) -> int:
        if self.k_max is not None:
            return self.k_max
        if d == 1:
            return 18
        if d <= 3:
            return 8
        return {4: 4, 5: 3}.get(d, 2)


@dataclass(frozen=True)
class TaylorPoly:
    center: np.ndarray
    coeffs: Mapping[Monomial, float]
    order: int
    condition: float = field(default=1.0, compare=False)

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def constant(self) -> float:
        return self.coeffs.get((0,) * self.dim, 0.0)

    def degree(self) -> int:
        return max((sum(e) for e in self.coeffs), default=0)

    def terms(self) -> list[tuple[Monomial, float]]:
        return sorted(self.coeffs.items(), key=lambda kv: monomial_key(kv[0]))

    def __len__(self) -> int:
        return len(self.coeffs)


def monomial_key(e: Monomial):
    # graded lexicographic: by degree, then x0 powers first
    return (sum(e), tuple(-v for v in e))


def monomials(d: int, k: int, include_constant: bool = True) -> list[Monomial]:
    """All exponent vectors of total degree <= k in graded lexicographic order."""
    out = []
    for g in range(0 if include_constant else 1, k + 1):
        for combo in itertools.combinations_with_replacement(range(d), g):
            e = [0] * d
            for t in combo:
                e[t] += 1
            out.append(tuple(e))
    return sorted(set(out), key=monomial_key)


def choose_order(d: int, n_samples: int, cfg: FitConfig = FitConfig()) -> int:
    """Largest order k <= cap with C(d+k, d) <= n_samples."""
    if n_samples < 2 or math.comb(d + 1, d) > n_samples:
        raise FitError(f"{n_samples} samples cannot support a first-order fit in {d} variables")
    k = 1
    cap = cfg.order_cap(d)
    while k < cap and math.comb(d + k + 1, d) <= n_samples:
        k += 1
    return k


def select_center_and_neighborhood(data: Dataset, m: int) -> tuple[int, np.ndarray]:
    """Index of the sample nearest the coordinate-wise median and its ``m``
    nearest other samples (ties broken by row index)."""
    X = data.X
    if m > data.n - 1:
        raise ValueError("neighborhood larger than the remaining dataset")
    med = np.median(X, axis=0)
    center = int(np.argmin(np.sum((X - med) ** 2, axis=1)))
    return center, _nearest(X, center, m)


def _nearest(X: np.ndarray, center: int, m: int) -> np.ndarray:
    dist = np.sum((X - X[center]) ** 2, axis=1)
    order = np.argsort(dist, kind="stable")
    return order[order != center][:m]


def _monomial_matrix(X: np.ndarray, center: np.ndarray, basis: Sequence[Monomial]) -> np.ndarray:
    U = X - center
    cols = []
    for e in basis:
        col = np.ones(len(X))
        for t, p in enumerate(e):
            if p:
                col = col * U[:, t] ** p
        cols.append(col)
    return np.column_stack(cols) if cols else np.zeros((len(X), 0))


def _solve(A: np.ndarray, b: np.ndarray, ridge: float) -> tuple[np.ndarray, float, int]:
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    As = A / scale
    if ridge > 0:
        As_aug = np.vstack([As, math.sqrt(ridge) * np.eye(As.shape[1])])
        b_aug = np.concatenate([b, np.zeros(As.shape[1])])
    else:
        As_aug, b_aug = As, b
    sol, _, rank, sv = np.linalg.lstsq(As_aug, b_aug, rcond=None)
    cond = float(sv[0] / sv[-1]) if len(sv) and sv[-1] > 0 else math.inf
    return sol / scale, cond, int(rank)


def fit_taylor(
    data: Dataset,
    cfg: FitConfig = FitConfig(),
    k: int | None = None,
    center_index: int | None = None,
) -> TaylorPoly:
    """Recover a k-order Taylor polynomial around the central sample (or the
    row ``center_index`` when given).

    When the local system is rank-deficient the order is lowered until it is
    not; :class:`FitError` is raised if even a first-order fit fails.
    """
    if k is None:
        k = choose_order(data.d, data.n, cfg)
    while True:
        try:
            return _fit_order(data, cfg, k, center_index)
        except FitError:
            if k <= 1:
                raise
            k -= 1


def _fit_order(data: Dataset, cfg: FitConfig, k: int, center_index: int | None) -> TaylorPoly:
    d, n = data.d, data.n
    basis = monomials(d, k, include_constant=False)
    m = min(math.ceil(cfg.oversample * len(basis)), n - 1)
    if m < len(basis):
        raise FitError(f"only {m} neighbors for {len(basis)} unknowns")
    if center_index is None:
        ci, nbrs = select_center_and_neighborhood(data, m)
    else:
        ci = center_index
        nbrs = _nearest(data.X, ci, m)
    x0, y0 = data.X[ci], float(data.y[ci])
    factorials = np.array([math.prod(math.factorial(p) for p in e) for e in basis], dtype=float)
    A = _monomial_matrix(data.X[nbrs], x0, basis) / factorials
    D = data.y[nbrs] - y0
    derivs, cond, rank = _solve(A, D, cfg.ridge)
    if not np.all(np.isfinite(derivs)):
        raise FitError("non-finite derivative estimates", cond)
    if rank < len(basis):
        raise FitError(f"rank {rank} < {len(basis)} unknowns at order {k}", cond)
    coeffs = {(0,) * d: y0}
    for e, f, fact in zip(basis, derivs, factorials):
        coeffs[e] = float(f / fact)
    return TaylorPoly(center=x0.copy(), coeffs=coeffs, order=k, condition=cond)


def poly_eval_batch(p: TaylorPoly, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = X - p.center
    out = np.zeros(len(X))
    for e, c in p.terms():
        term = np.full(len(X), c)
        for t, q in enumerate(e):
            if q:
                term = term * U[:, t] ** q
        out = out + term
    return out


def poly_eval(p: TaylorPoly, x) -> float:
    return float(poly_eval_batch(p, np.asarray(x, dtype=float)[None, :])[0])


def truncate(p: TaylorPoly, eps: float) -> TaylorPoly:
    if eps < 0:
        raise ValueError("eps must be >= 0")
    kept = {e: c for e, c in p.coeffs.items() if abs(c) >= eps}
    return TaylorPoly(p.center, kept, p.order, p.condition)


def restrict(p: TaylorPoly, variables: Iterable[int]) -> TaylorPoly:
    """Monomials supported only on ``variables`` (constant excluded), re-indexed
    to the listed variable order."""
    vs = list(variables)
    outside = [t for t in range(p.dim) if t not in vs]
    coeffs = {}
    for e, c in p.coeffs.items():
        if sum(e) == 0 or any(e[t] for t in outside):
            continue
        coeffs[tuple(e[t] for t in vs)] = c
    return TaylorPoly(p.center[vs].copy(), coeffs, p.order, p.condition)


def shift_center(p: TaylorPoly, new_center) -> TaylorPoly:
    """Re-expand ``p`` in powers of ``(x - new_center)``; exact algebra."""
    new_center = np.asarray(new_center, dtype=float)
    delta = new_center - p.center
    out: dict[Monomial, float] = {}
    for e, c in p.coeffs.items():
        # (u + delta)^e per variable, u = x - new_center
        per_var = [
            [(j, math.comb(q, j) * delta[t] ** (q - j)) for j in range(q + 1)] for t, q in enumerate(e)
        ]
        for combo in itertools.product(*per_var):
            exps = tuple(j for j, _ in combo)
            w = c * math.prod(f for _, f in combo)
            out[exps] = out.get(exps, 0.0) + w
    return TaylorPoly(new_center.copy(), out, p.order, p.condition)


def refit_coefficients(
    support: Iterable[Monomial], data: Dataset, center=None
) -> TaylorPoly:
    """Least-squares coefficients on a fixed monomial support over the full
    dataset, expanded about ``center`` (the origin by default)."""
    basis = sorted(set(support), key=monomial_key)
    d = data.d
    if len(basis) > data.n:
        raise FitError(f"support of {len(basis)} monomials exceeds {data.n} samples")
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    if not basis:
        return TaylorPoly(center, {}, 0)
    A = _monomial_matrix(data.X, center, basis)
    sol, cond, rank = _solve(A, data.y, 0.0)
    if rank < len(basis) or not np.all(np.isfinite(sol)):
        raise FitError("singular design on the given support", cond)
    coeffs = {e: float(c) for e, c in zip(basis, sol)}
    return TaylorPoly(center, coeffs, max(sum(e) for e in basis), cond)


def poly_to_expr(p: TaylorPoly, variables: Sequence[int] | None = None) -> ex.Expr:
    """Sum-of-products expression tree for ``p``.

    ``variables`` maps the polynomial's local variable slots to global
    variable indices (identity by default).
    """
    vs = list(range(p.dim)) if variables is None else list(variables)
    total = None
    for e, c in p.terms():
        term = ex.const(c)
        for t, q in enumerate(e):
            if not q:
                continue
            base = ex.var(vs[t])
            if p.center[t] != 0:
                base = ex.sub(base, ex.const(float(p.center[t])))
            for _ in range(q):
                term = ex.mul(term, base)
        total = term if total is None else ex.add(total, term)
    return ex.const(0.0) if total is None else total

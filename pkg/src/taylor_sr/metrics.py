"""Fitness and reporting metrics."""

from __future__ import annotations

import math

import numpy as np

RECOVERY_THRESHOLD = 1e-5


def _pair(yhat, y) -> tuple[np.ndarray, np.ndarray]:
    yhat = np.asarray(yhat, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if yhat.shape != y.shape:
        raise ValueError(f"length mismatch: {yhat.size} predictions for {y.size} targets")
    return yhat, y


def rmse(yhat, y) -> float:
    """Root mean squared error; any non-finite prediction gives +inf."""
    yhat, y = _pair(yhat, y)
    if yhat.size == 0:
        raise ValueError("rmse of empty vectors")
    if not np.all(np.isfinite(yhat)):
        return math.inf
    with np.errstate(over="ignore"):
        value = float(np.sqrt(np.mean((yhat - y) ** 2)))
    return value if math.isfinite(value) else math.inf


def r2(yhat, y) -> float:
    """Coefficient of determination.

    For a constant target the score is 1 on an exact fit and -inf otherwise.
    """
    yhat, y = _pair(yhat, y)
    if yhat.size < 2:
        raise ValueError("r2 needs at least two samples")
    if not np.all(np.isfinite(yhat)):
        return -math.inf
    ss_res = float(np.sum((yhat - y) ** 2))
    ss_tot = float(np.sum((y.mean() - y) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else -math.inf
    return 1.0 - ss_res / ss_tot


def r2_clamped(yhat, y) -> float:
    """max(0, R^2); a stand-in for a normalised score, not a published formula."""
    return max(0.0, r2(yhat, y))


def recovery_rate(run_rmses, threshold: float = RECOVERY_THRESHOLD) -> float:
    """Fraction of runs whose final RMSE is below ``threshold``."""
    values = np.asarray(run_rmses, dtype=float).reshape(-1)
    if values.size == 0:
        raise ValueError("recovery rate of no runs")
    return float(np.mean(values < threshold))

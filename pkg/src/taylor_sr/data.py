"""Datasets, CSV ingestion and the built-in benchmark suites.

SRB covers F1-F23 (classical symbolic regression problems), FSRB covers
F24-F71 (Feynman equations).  Ranges follow the ``U[a, b, n]`` notation:
every variable is drawn uniformly from ``[a, b]`` and ``n`` rows are drawn.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import expr as ex


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...] = ()
    target: str = "y"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise DataError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains NaN or infinite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"x{i}" for i in range(X.shape[1])))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def columns(self, idx: Sequence[int], y=None) -> Dataset:
        """Projection onto some variables, optionally with a replacement target."""
        idx = list(idx)
        return Dataset(
            self.X[:, idx],
            self.y if y is None else y,
            tuple(self.names[i] for i in idx),
            self.target,
        )


def load_csv(path) -> Dataset:
    """Headered CSV; the last column is the target."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if len(header) < 2:
        raise DataError(f"{path}: need at least one feature and one target column")
    if not body:
        raise DataError(f"{path}: empty dataset (header only)")
    values = np.empty((len(body), len(header)))
    for r, row in enumerate(body):
        line = r + 2
        if len(row) != len(header):
            raise DataError(f"{path}: line {line}: expected {len(header)} cells, got {len(row)}")
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: line {line}, column {c + 1} ({header[c]!r}): not a number: {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise DataError(f"{path}: line {line}, column {c + 1}: non-finite value {cell!r}")
            values[r, c] = v
    names = tuple(h.strip() for h in header)
    return Dataset(values[:, :-1], values[:, -1], names[:-1], names[-1])


def save_csv(data: Dataset, path) -> None:
    """Write ``data`` with values in round-trip precision; ``path`` may also
    be an open text stream."""
    if hasattr(path, "write"):
        _write_rows(data, path)
        return
    with Path(path).open("w", newline="") as fh:
        _write_rows(data, fh)


def _write_rows(data: Dataset, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(list(data.names) + [data.target])
    for row, yv in zip(data.X, data.y):
        w.writerow([repr(float(v)) for v in row] + [repr(float(yv))])


# --- benchmarks -------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkDef:
    id: str
    name: str
    formula: str
    variables: tuple[str, ...]
    ranges: tuple[tuple[float, float], ...]
    n_samples: int
    suite: str
    truth: ex.Expr = field(compare=False, repr=False)

    @property
    def d(self) -> int:
        return len(self.variables)

    def manifest(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "suite": self.suite,
            "formula": self.formula,
            "variables": list(self.variables),
            "ranges": [list(r) for r in self.ranges],
            "n_samples": self.n_samples,
            "ground_truth": ex.format_expr(self.truth),
        }


PI = repr(math.pi)

# id: (name, formula, variables, per-variable range or a dict of ranges, n)
_SRB = {
    "F1": ("Keijzer-5", "log(x)", "x", (0, 2), 20),
    "F2": ("Nguyen-8", "sqrt(x)", "x", (0, 2), 20),
    "F3": ("Korns-1", "1.57 + 24.3*x", "x", (-1, 1), 20),
    "F4": ("Korns-6", "6.87 + 11*cos(7.23*x*x*x)", "x", (-0.5, 0.5), 20),
    "F5": ("Nguyen-4", "x*x*x*x*x*x + x*x*x*x*x + x*x*x*x + x*x*x + x*x + x", "x", (-1, 1), 20),
    "F6": ("Nguyen-3", "x*x*x*x*x + x*x*x*x + x*x*x + x*x + x", "x", (-1, 1), 20),
    "F7": ("Koza-1,Nguyen-2", "x*x*x*x + x*x*x + x*x + x", "x", (-1, 1), 20),
    "F8": ("Nguyen-1", "x*x*x + x*x + x", "x", (-1, 1), 20),
    "F9": ("Koza-3", "x*x*x*x*x*x - 2*x*x*x*x + x*x", "x", (-1, 1), 20),
    "F10": ("Koza-2", "x*x*x*x*x - 2*x*x*x + x", "x", (-1, 1), 20),
    "F11": ("Nguyen-5", "cos(x)*sin(x*x) - 1", "x", (-1.6, 1.6), 20),
    "F12": ("Nguyen-6", "sin(x) + sin(x + x*x)", "x", (-1, 1), 20),
    "F13": ("Nguyen-11", "exp(y*log(x))", "x y", (2, 4), 400),
    "F14": ("Keijzer-11", "x*y + sin((x - 1)*(y - 1))", "x y", (-1, 1), 400),
    "F15": ("Nguyen-12", "x*x*x*x - x*x*x + y*y/2 - y", "x y", (-1, 1), 400),
    "F16": ("Keijzer-13", "6*sin(x)*cos(y)", "x y", (-1, 1), 400),
    "F17": ("Keijzer-15", "x*x*x/5 + y*y*y/2 - y - x", "x y", (-1, 1), 400),
    "F18": ("Nguyen-9", "sin(x) + sin(y*y)", "x y", (-1, 1), 400),
    "F19": ("Nguyen-10", "2*sin(x)*cos(y)", "x y", (-1, 1), 400),
    "F20": (
        "Vladislavleva-1",
        "exp(-((x - 1)*(x - 1)))/(1.2 + (y - 2.5)*(y - 2.5))",
        "x y",
        (-1, 1),
        400,
    ),
    "F21": (
        "Keijzer-3",
        "30*x*z/((x - 10)*exp(y*log(y)))",
        "x y z",
        {"x": (-1, 1), "y": (1, 3), "z": (-1, 1)},
        1000,
    ),
    "F22": (
        "Korns-2",
        "0.23 + 14.2*(x + y)/(3*z)",
        "x y z",
        {"x": (-1, 1), "y": (-1, 1), "z": (1, 3)},
        1000,
    ),
    "F23": ("Vladislavleva-5", "30*((x - 1)*(z - 1))/(y*y*(x - 10))", "x y z", (0, 2), 1000),
}

_SQ = "sqrt(1 - v*v/(c*c))"
_FSRB = {
    "F24": ("I.6.2a", f"exp(-theta*theta/2)/sqrt(2*{PI})", "theta", (1, 3), 20),
    "F25": (
        "I.6.2",
        f"exp(-(theta/sigma)*(theta/sigma)/2)/(sqrt(2*{PI})*sigma)",
        "sigma theta",
        (1, 3),
        400,
    ),
    "F26": ("I.12.1", "mu*Nn", "mu Nn", (2, 4), 400),
    "F27": ("I.12.5", "q2*Ef", "q2 Ef", (2, 4), 400),
    "F28": ("I.14.4", "1/2*k_spring*x*x", "k_spring x", (2, 4), 400),
    "F29": ("I.25.13", "q/C", "q C", (2, 4), 400),
    "F30": ("I.26.2", "asin(n*sin(theta2))", "n theta2", {"n": (0, 1), "theta2": (2, 4)}, 400),
    "F31": ("I.29.4", "omega/c", "omega c", (2, 4), 400),
    "F32": ("I.34.27", f"(h/(2*{PI}))*omega", "omega h", (2, 4), 400),
    "F33": ("I.39.1", "3/2*pr*V", "pr V", (2, 4), 400),
    "F34": ("II.3.24", f"Pwr/(4*{PI}*r*r)", "Pwr r", (2, 4), 400),
    "F35": ("II.8.31", "epsilon*Ef*Ef/2", "epsilon Ef", (2, 4), 400),
    "F36": ("II.11.28", "1 + n*alpha/(1 - (n*alpha/3))", "n alpha", (0, 1), 400),
    "F37": ("II.27.18", "epsilon*Ef*Ef", "epsilon Ef", (2, 4), 400),
    "F38": ("II.38.14", "Y/(2*(1 + sigma))", "Y sigma", (2, 4), 400),
    "F39": ("III.12.43", f"n*(h/(2*{PI}))", "n h", (2, 4), 400),
    "F40": ("II.37.1", "mom*(1 + chi)*B", "mom B chi", (2, 4), 1000),
    "F41": ("I.18.12", "r*F*sin(theta)", "r F theta", (2, 4), 1000),
    "F42": (
        "I.6.2b",
        f"exp(-((theta - theta1)/sigma)*((theta - theta1)/sigma)/2)/(sqrt(2*{PI})*sigma)",
        "sigma theta theta1",
        (1, 3),
        1000,
    ),
    "F43": ("I.10.7", f"m0/{_SQ}", "m0 v c", {"m0": (3, 5), "v": (1, 2), "c": (3, 5)}, 1000),
    "F44": ("I.12.4", f"q1*r/(4*{PI}*epsilon*r*r*r)", "q1 epsilon r", (2, 4), 1000),
    "F45": ("I.14.3", "m*g*z", "m g z", (2, 4), 1000),
    "F46": ("I.15.1", f"m0*v/{_SQ}", "m0 v c", {"m0": (3, 5), "v": (1, 2), "c": (3, 5)}, 1000),
    "F47": ("I.16.6", "(u + v)/(1 + u*v/(c*c))", "c v u", (2, 4), 1000),
    "F48": ("I.27.6", "1/(1/d1 + n/d2)", "d1 d2 n", (2, 4), 1000),
    "F49": (
        "I.30.3",
        "Int_0*sin(n*theta/2)*sin(n*theta/2)/(sin(theta/2)*sin(theta/2))",
        "Int_0 theta n",
        (2, 4),
        1000,
    ),
    "F50": (
        "I.30.5",
        "asin(lambd/(n*d))",
        "lambd d n",
        {"lambd": (1, 2), "d": (2, 4), "n": (2, 4)},
        1000,
    ),
    "F51": (
        "I.34.1",
        "omega_0/(1 - v/c)",
        "c v omega_0",
        {"c": (3, 5), "v": (1, 2), "omega_0": (3, 5)},
        1000,
    ),
    "F52": (
        "I.34.14",
        f"(1 + v/c)/{_SQ}*omega_0",
        "c v omega_0",
        {"c": (3, 5), "v": (1, 2), "omega_0": (3, 5)},
        1000,
    ),
    "F53": ("I.37.4", "I1 + I2 + 2*sqrt(I1*I2)*cos(delta)", "I1 I2 delta", (2, 4), 1000),
    "F54": ("I.39.11", "1/(gamma - 1)*pr*V", "gamma pr V", (2, 4), 1000),
    "F55": ("I.43.31", "mob*kb*T", "mob T kb", (2, 4), 1000),
    "F56": ("I.47.23", "sqrt(gamma*pr/rho)", "gamma pr rho", (2, 4), 1000),
    "F57": ("II.4.23", f"q/(4*{PI}*epsilon*r)", "q epsilon r", (2, 4), 1000),
    "F58": ("II.8.7", f"3/5*q*q/(4*{PI}*epsilon*d)", "q epsilon d", (2, 4), 1000),
    "F59": ("II.10.9", "sigma_den/epsilon*1/(1 + chi)", "sigma_den epsilon chi", (2, 4), 1000),
    "F60": (
        "II.13.23",
        f"rho_c_0/{_SQ}",
        "rho_c_0 v c",
        {"rho_c_0": (3, 5), "v": (1, 2), "c": (3, 5)},
        1000,
    ),
    "F61": (
        "II.13.34",
        f"rho_c_0*v/{_SQ}",
        "rho_c_0 v c",
        {"rho_c_0": (3, 5), "v": (1, 2), "c": (3, 5)},
        1000,
    ),
    "F62": ("II.27.16", "epsilon*c*Ef*Ef", "epsilon c Ef", (2, 4), 1000),
    "F63": ("II.34.2a", f"q*v/(2*{PI}*r)", "q v r", (2, 4), 1000),
    "F64": ("II.34.2", "q*v*r/2", "q v r", (2, 4), 1000),
    "F65": ("II.34.29a", f"q*h/(4*{PI}*m)", "q h m", (2, 4), 1000),
    "F66": ("III.7.38", f"2*mom*B/(h/(2*{PI}))", "mom B h", (2, 4), 1000),
    "F67": (
        "III.8.54",
        f"sin(E_n*t/(h/(2*{PI})))*sin(E_n*t/(h/(2*{PI})))",
        "E_n t h",
        (1, 2),
        1000,
    ),
    "F68": ("III.15.12", "2*U*(1 - cos(k*d))", "U k d", (2, 4), 1000),
    "F69": ("II.15.4", "-mom*B*cos(theta)", "mom B theta", (2, 4), 1000),
    "F70": ("II.15.5", "-p_d*Ef*cos(theta)", "p_d Ef theta", (2, 4), 1000),
    "F71": ("I.18.14", "m*r*v*sin(theta)", "m r v theta", (2, 4), 4000),
}


def _build(bid: str, spec: tuple, suite: str) -> BenchmarkDef:
    name, formula, variables, ranges, n = spec
    names = tuple(variables.split())
    if isinstance(ranges, dict):
        rng_t = tuple(tuple(float(v) for v in ranges[v]) for v in names)
    else:
        rng_t = tuple((float(ranges[0]), float(ranges[1])) for _ in names)
    truth = ex.parse(formula, names={v: i for i, v in enumerate(names)}, eval_only=True)
    return BenchmarkDef(bid, name, formula, names, rng_t, n, suite, truth)


BENCHMARKS: dict[str, BenchmarkDef] = {}
for _bid, _spec in _SRB.items():
    BENCHMARKS[_bid] = _build(_bid, _spec, "srb")
for _bid, _spec in _FSRB.items():
    BENCHMARKS[_bid] = _build(_bid, _spec, "fsrb")

SUITES = {
    "srb": [f"F{i}" for i in range(1, 24)],
    "fsrb": [f"F{i}" for i in range(24, 72)],
}
SUITES["all"] = SUITES["srb"] + SUITES["fsrb"]


def builtin(bid: str) -> BenchmarkDef:
    key = bid.strip().upper()
    if key not in BENCHMARKS:
        raise DataError(f"unsupported benchmark id {bid!r} (built-in formulas cover F1-F71)")
    return BENCHMARKS[key]


def sample_uniform(bench: BenchmarkDef, rng: np.random.Generator, max_redraws: int = 1000) -> Dataset:
    """Draw ``bench.n_samples`` rows; rows whose ground truth is non-finite
    are redrawn."""
    lo = np.array([r[0] for r in bench.ranges])
    hi = np.array([r[1] for r in bench.ranges])
    if np.any(lo >= hi):
        raise DataError(f"{bench.id}: invalid sampling range")
    X = lo + (hi - lo) * rng.random((bench.n_samples, bench.d))
    y = ex.eval_batch(bench.truth, X)
    for _ in range(max_redraws):
        bad = ~np.isfinite(y)
        if not bad.any():
            break
        X[bad] = lo + (hi - lo) * rng.random((int(bad.sum()), bench.d))
        y[bad] = ex.eval_batch(bench.truth, X[bad])
    else:
        raise DataError(f"{bench.id}: could not draw finite samples")
    return Dataset(X, y, bench.variables, "y")


def resolve_suite(spec: str) -> list[str]:
    """``srb``, ``fsrb``, ``all`` or a comma-separated list of ids."""
    key = spec.strip().lower()
    if key in SUITES:
        return list(SUITES[key])
    ids = [s.strip().upper() for s in spec.split(",") if s.strip()]
    if not ids:
        raise DataError("empty benchmark suite")
    for bid in ids:
        builtin(bid)
    return ids

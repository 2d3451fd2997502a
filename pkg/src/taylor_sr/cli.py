"""Command-line front end.

    taylor-sr analyze (CSV | --bench ID)     Taylor features as JSON
    taylor-sr fit (CSV | --bench ID)         run the search, write a report
    taylor-sr bench --suite srb --runs 5     repeated runs, aggregate CSV
    taylor-sr gen --bench F8 --out f8.csv    sample a benchmark dataset

Exit codes: 0 success, 1 budget exhausted (best-effort result written),
2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import metrics
from .data import DataError, Dataset, builtin, load_csv, resolve_suite, sample_uniform, save_csv
from .features import extract_features, truncated_terms
from .ffem import EvolutionConfig
from .pipeline import RunResult, TaylorGPConfig, taylorgp
from .taylor import FitConfig, FitError

SCHEMA_VERSION = "1"
PRESETS = {"desk": {"pop": 500, "gens": 2000}, "full": {"pop": 1000, "gens": 10000}}
EXIT_OK, EXIT_BUDGET, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --- helpers ------------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, allow_nan=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _threads() -> int:
    raw = os.environ.get("TAYLOR_SR_THREADS")
    cap = os.cpu_count() or 1
    if raw is None:
        return cap
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"TAYLOR_SR_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise UsageError("TAYLOR_SR_THREADS must be >= 1")
    return min(n, cap)


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent generators for data sampling and for the run."""
    a, b = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(a), np.random.default_rng(b)


def _load(args, data_rng: np.random.Generator) -> Dataset:
    if args.bench and args.input:
        raise UsageError("give either a CSV path or --bench, not both")
    if args.bench:
        return sample_uniform(builtin(args.bench), data_rng)
    if not args.input:
        raise UsageError("missing input: a CSV path or --bench ID")
    if not Path(args.input).is_file():
        raise UsageError(f"file not found: {args.input}")
    return load_csv(args.input)


def _fit_config(args) -> FitConfig:
    try:
        return FitConfig(k_max=args.k_max, coef_eps=args.coef_eps)
    except ValueError as e:
        raise UsageError(str(e))


def _evo_config(args) -> EvolutionConfig:
    preset = PRESETS.get(args.preset or "", {})
    pop = args.pop if args.pop is not None else preset.get("pop", 1000)
    gens = args.gens if args.gens is not None else preset.get("gens", 10000)
    try:
        return _make_evo(args, pop, gens)
    except ValueError as e:
        raise UsageError(str(e))


def _make_evo(args, pop: int, gens: int) -> EvolutionConfig:
    return EvolutionConfig(
        pop_size=pop,
        max_gen=gens,
        alpha=args.alpha,
        beta=args.beta,
        threshold=args.threshold,
        max_len=args.max_len,
        tournament_size=args.tournament,
        seed=args.seed,
    )


def _config_dict(cfg: TaylorGPConfig) -> dict:
    return {
        "evolution": dataclasses.asdict(cfg.evolution),
        "fit": dataclasses.asdict(cfg.fit),
        "top_m": cfg.top_m,
    }


def _envelope(command: str, config: dict, seed: int, stamp: bool) -> dict:
    out = {"version": SCHEMA_VERSION, "command": command, "config": config, "seed": seed}
    if stamp:
        out["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return out


def run_report(res: RunResult, cfg: TaylorGPConfig, seed: int, stamp: bool, source: str) -> dict:
    rep = _envelope("fit", _config_dict(cfg), seed, stamp)
    rep["input"] = source
    rep["result"] = {
        "expression": res.text,
        "rmse": res.rmse,
        "r2": res.r2,
        "generations": res.generations,
        "wall_ms": round(res.wall_ms, 3) if stamp else None,
        "low_order_exit": res.low_order_exit,
        "context": res.context,
        "groups": [list(s.group) for s in res.subresults],
        "fallback": res.fallback,
    }
    rep["features"] = None if res.features is None else res.features.to_dict()
    rep["trace"] = res.trace()
    return rep


# --- commands -----------------------------------------------------------------


def cmd_analyze(args) -> int:
    data_rng, run_rng = _streams(args.seed)
    data = _load(args, data_rng)
    cfg = _fit_config(args)
    t0 = time.perf_counter()
    try:
        p, F = extract_features(data, cfg, args.threshold, run_rng)
    except FitError as e:
        raise UsageError(f"cannot fit a Taylor polynomial: {e}")
    wall = (time.perf_counter() - t0) * 1000.0
    rep = _envelope("analyze", {"fit": dataclasses.asdict(cfg), "threshold": args.threshold}, args.seed, not args.no_timestamp)
    rep["input"] = args.bench or args.input
    rep["result"] = {
        "order": p.order,
        "terms": len(p),
        "center": [float(v) for v in p.center],
        "condition": p.condition,
        "top_terms": truncated_terms(p, cfg.coef_eps),
        "wall_ms": round(wall, 3) if not args.no_timestamp else None,
    }
    rep["features"] = F.to_dict()
    _emit(dump_json(rep), args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    data_rng, run_rng = _streams(args.seed)
    data = _load(args, data_rng)
    cfg = TaylorGPConfig(_evo_config(args), _fit_config(args))
    res = taylorgp(data, cfg, run_rng, seed=args.seed)
    rep = run_report(res, cfg, args.seed, not args.no_timestamp, args.bench or args.input)
    _emit(dump_json(rep), args.out)
    print(f"{res.text}\nrmse={res.rmse:.6g} generations={res.generations}", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK if res.rmse < cfg.threshold else EXIT_BUDGET


def run_seed(master: int, bench_index: int, run: int) -> int:
    """Per-run seed derived from the master seed by position only."""
    return int(np.random.SeedSequence([master, bench_index, run]).generate_state(1)[0])


def _bench_one(job) -> dict:
    bid, seed, cfg, stamp = job
    data_rng, run_rng = _streams(seed)
    try:
        data = sample_uniform(builtin(bid), data_rng)
        t0 = time.perf_counter()
        res = taylorgp(data, cfg, run_rng, seed=seed)
        secs = time.perf_counter() - t0
        return {"id": bid, "seed": seed, "rmse": res.rmse, "r2": res.r2, "generations": res.generations, "seconds": secs, "report": run_report(res, cfg, seed, stamp, bid), "error": None}
    except Exception as e:  # recorded per row; the sweep goes on
        return {"id": bid, "seed": seed, "error": f"{type(e).__name__}: {e}"}


CSV_FIELDS = ["benchmark", "runs", "failed", "cr", "mean_rmse", "median_rmse", "mean_r2", "mean_generations", "mean_seconds", "errors"]


def aggregate(bid: str, rows: list[dict], threshold: float, stamp: bool) -> dict:
    ok = [r for r in rows if r["error"] is None]
    out = {"benchmark": bid, "runs": len(rows), "failed": len(rows) - len(ok), "errors": "; ".join(r["error"] for r in rows if r["error"])}
    if ok:
        rm = [r["rmse"] for r in ok]
        out.update(
            cr=metrics.recovery_rate(rm, threshold),
            mean_rmse=float(np.mean(rm)),
            median_rmse=float(statistics.median(rm)),
            mean_r2=float(np.mean([r["r2"] for r in ok])),
            mean_generations=float(np.mean([r["generations"] for r in ok])),
            mean_seconds=float(np.mean([r["seconds"] for r in ok])) if stamp else "",
        )
    else:
        out.update(cr="", mean_rmse="", median_rmse="", mean_r2="", mean_generations="", mean_seconds="")
    return out


def cmd_bench(args) -> int:
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    ids = resolve_suite(args.suite)
    cfg = TaylorGPConfig(_evo_config(args), _fit_config(args))
    stamp = not args.no_timestamp
    jobs = [(bid, run_seed(args.seed, i, r), cfg, stamp) for i, bid in enumerate(ids) for r in range(args.runs)]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_bench_one, jobs))
    else:
        results = [_bench_one(j) for j in jobs]

    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, bid in enumerate(ids):
        mine = results[i * args.runs:(i + 1) * args.runs]
        if out_dir:
            for r, res in enumerate(mine):
                if res["error"] is None:
                    (out_dir / f"{bid}_run{r}.json").write_text(dump_json(res["report"]))
        rows.append(aggregate(bid, mine, cfg.threshold, stamp))
    buf = io.StringIO()
    w = csv.DictWriter(buf, CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    if out_dir:
        (out_dir / "summary.csv").write_text(buf.getvalue())
        print(f"wrote {out_dir / 'summary.csv'}")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_gen(args) -> int:
    data_rng, _ = _streams(args.seed)
    data = sample_uniform(builtin(args.bench), data_rng)
    if args.out:
        save_csv(data, args.out)
    else:
        save_csv(data, sys.stdout)
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", nargs="?", help="CSV file (last column is the target)")
    p.add_argument("--bench", help="built-in benchmark id, F1-F71")


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k-max", type=int, default=None, help="Taylor order cap (default by dimension)")
    p.add_argument("--coef-eps", type=float, default=1e-4, help="coefficient truncation")
    p.add_argument("--threshold", type=float, default=metrics.RECOVERY_THRESHOLD, help="RMSE that counts as solved")


def _add_evo_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), help="desk: pop 500, gens 2000; full: pop 1000, gens 10000")
    p.add_argument("--pop", type=int, default=None)
    p.add_argument("--gens", type=int, default=None)
    p.add_argument("--alpha", type=float, default=0.7, help="recombination probability")
    p.add_argument("--beta", type=float, default=0.2, help="fresh-individual probability")
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--tournament", type=int, default=0, help="tournament size; 0 picks parents uniformly")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="taylor-sr", description="Symbolic regression guided by Taylor features.")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="extract Taylor features")
    _add_input(a)
    _add_fit_flags(a)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out")
    a.add_argument("--no-timestamp", action="store_true")
    a.set_defaults(func=cmd_analyze)

    f = sub.add_parser("fit", help="run the search on one dataset")
    _add_input(f)
    _add_fit_flags(f)
    _add_evo_flags(f)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out")
    f.add_argument("--no-timestamp", action="store_true")
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("bench", help="repeated seeded runs over benchmarks")
    b.add_argument("--suite", default="srb", help="srb, fsrb, all or a list like F8,F28")
    b.add_argument("--runs", type=int, default=1)
    b.add_argument("--out-dir")
    _add_fit_flags(b)
    _add_evo_flags(b)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--no-timestamp", action="store_true")
    b.set_defaults(func=cmd_bench)

    g = sub.add_parser("gen", help="write a sampled benchmark dataset")
    g.add_argument("--bench", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, DataError, OSError) as e:
        print(f"taylor-sr {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

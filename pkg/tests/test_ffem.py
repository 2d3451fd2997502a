import math

import numpy as np
import pytest
from hypothesis import given, settings
from scipy import stats

from taylor_sr import expr as ex
from taylor_sr import ffem
from taylor_sr.data import Dataset
from taylor_sr.expr import Monotonicity, Parity
from taylor_sr.features import FeatureSet
from taylor_sr.ffem import (
    EvolutionConfig,
    Individual,
    Problem,
    collect_like_terms,
    crossover,
    ffem_run,
    prune,
    recombine_by_features,
    select_best,
    top_individuals,
)
from taylor_sr.interval import Interval

from strategies import seeds, trees

X = ex.var(0)


def ind(fitness, size):
    e = X
    while e.size < size:
        e = ex.sin(e)
    return Individual(e, e, fitness)


def line_data(n=20, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (n, 1))
    return Dataset(x, x[:, 0].copy())


def odd_data():
    x = np.linspace(-1, 1, 41)[:, None]
    return Dataset(x, 5 * x[:, 0] + x[:, 0] ** 3)


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [dict(pop_size=0), dict(max_gen=-1), dict(alpha=0.9, beta=0.2), dict(alpha=-0.1), dict(threshold=-1.0),
         dict(max_len=4), dict(tournament_size=-1), dict(erc_range=(1.0, 1.0))],
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            EvolutionConfig(**kw)

    def test_defaults(self):
        c = EvolutionConfig()
        assert (c.pop_size, c.max_gen, c.alpha, c.beta, c.threshold, c.max_len) == (1000, 10000, 0.7, 0.2, 1e-5, 64)
        assert c.core_len == 60
        assert EvolutionConfig(linear_scaling=False).core_len == 64


class TestFitness:
    @settings(max_examples=40)
    @given(trees(d=2, max_depth=5))
    def test_score_matches_evaluation(self, e):
        rng = np.random.default_rng(0)
        X = rng.uniform(-2, 2, (30, 2))
        data = Dataset(X, np.sin(X[:, 0]) + X[:, 1])
        p = Problem(data)
        with np.errstate(all="ignore"):
            full, fit = p.score(e)
            yhat = ex.eval_batch(full, X)
        if math.isinf(fit):
            assert not np.all(np.isfinite(yhat)) or not np.all(np.isfinite(ex.eval_batch(e, X)))
        else:
            assert fit == pytest.approx(math.sqrt(np.mean((yhat - data.y) ** 2)), rel=1e-9, abs=1e-12)

    def test_nan_is_worst(self):
        p = Problem(line_data())
        with np.errstate(invalid="ignore"):
            assert p.score(ex.sqrt(ex.const(-1.0)))[1] == math.inf

    def test_scaling_fits_affine(self):
        data = line_data()
        p = Problem(data)
        full, fit = p.score(ex.add(X, ex.const(3.0)))
        assert fit < 1e-12
        assert Problem(data, linear_scaling=False).score(ex.add(X, ex.const(3.0)))[1] == pytest.approx(3.0)


class TestSelection:
    def test_single(self):
        a = ind(1.0, 3)
        assert select_best([a]) is a

    def test_lower_rmse(self):
        a, b = ind(0.5, 3), ind(0.1, 3)
        assert select_best([a, b]) is b

    def test_tie_goes_to_shorter_then_earlier(self):
        a, b, c = ind(0.2, 15), ind(0.2, 9), ind(0.2, 9)
        assert select_best([a, b, c]) is b

    def test_empty(self):
        with pytest.raises(ValueError):
            select_best([])

    def test_top_individuals_distinct(self):
        a, b = ind(0.1, 2), ind(0.3, 3)
        out = top_individuals([a, a, b], a, 3)
        assert [i.fitness for i in out] == [0.1, 0.3]


class TestPrune:
    def test_worked_example(self):
        e = ex.parse("2*x0 + 2*sin(x0) + x0 + x0*x0*x0")
        assert e.size == 16
        p = prune(e, 12, Parity.ODD)
        assert p.size <= 12
        xs = np.linspace(-1, 1, 9)[:, None]
        assert np.allclose(ex.eval_batch(p, xs), 5 * xs[:, 0] + xs[:, 0] ** 3)

    def test_identity_when_short(self):
        e = ex.parse("x0 + sin(x0)")
        assert prune(e, 12) is e
        assert prune(X, 1) is X

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            prune(X, 0)

    @settings(max_examples=60)
    @given(trees(d=1, max_depth=7), seeds)
    def test_terminates_under_limit(self, e, seed):
        assert prune(e, 7, rng=np.random.default_rng(seed)).size <= 7

    @settings(max_examples=60)
    @given(seeds)
    def test_keeps_oddness(self, seed):
        rng = np.random.default_rng(seed)
        pool = [X, ex.sin(X), ex.mul(X, ex.mul(X, X)), ex.mul(ex.const(2.0), X)]
        e = pool[int(rng.integers(4))]
        for _ in range(6):
            e = ex.add(e, pool[int(rng.integers(4))]) if rng.random() < 0.5 else ex.sub(e, pool[int(rng.integers(4))])
        pts = np.random.default_rng(1).uniform(-1, 1, (32, 1))
        p = prune(e, 9, Parity.ODD, rng=rng)
        assert p.size <= 9 and ex.parity_at(p, pts) == Parity.ODD

    def test_collect_like_terms(self):
        e = ex.parse("2*x0 + x0 + 3 - 1")
        c = collect_like_terms(e)
        assert c.size < e.size
        assert ex.evaluate(c, [1.5]) == pytest.approx(ex.evaluate(e, [1.5]))


class TestRecombine:
    def test_odd_parents_stay_odd(self):
        data = odd_data()
        problem = Problem(data)
        F = FeatureSet(Interval(-6, 6), ((0,),), parity=Parity.ODD)
        p1 = problem.individual(ex.parse("2*x0 + 2*sin(x0)"))
        p2 = problem.individual(ex.parse("x0 + x0*x0*x0"))
        pts = np.random.default_rng(2).uniform(-1, 1, (32, 1))
        xs = np.linspace(-1, 1, 9)[:, None]
        target_hit = False
        for seed in range(20):
            c = recombine_by_features(p1, p2, F, problem, np.random.default_rng(seed), 12)
            assert c.size <= 12 and ex.parity_at(c, pts) == Parity.ODD
            target_hit |= np.allclose(ex.eval_batch(c, xs), 5 * xs[:, 0] + xs[:, 0] ** 3)
        assert target_hit

    def test_odd_times_odd_is_even(self):
        problem = Problem(odd_data())
        F = FeatureSet(Interval(-6, 6), ((0,),), parity=Parity.EVEN)
        a = problem.individual(ex.sin(X))
        b = problem.individual(X)
        pts = np.random.default_rng(2).uniform(-1, 1, (32, 1))
        c = recombine_by_features(a, b, F, problem, np.random.default_rng(0), 30)
        assert ex.parity_at(c, pts) == Parity.EVEN

    def test_unconstrained_is_crossover(self):
        problem = Problem(line_data())
        F = FeatureSet.unconstrained(1)
        a = problem.individual(ex.parse("sin(x0) + 1"))
        b = problem.individual(ex.parse("exp(x0) * x0"))
        got = recombine_by_features(a, b, F, problem, np.random.default_rng(4), 60)
        want = crossover(a.core, b.core, np.random.default_rng(4))
        assert got == want


class TestRun:
    @pytest.fixture(scope="class")
    @staticmethod
    def small():
        return EvolutionConfig(pop_size=50, max_gen=50)

    def test_identity_target(self, small):
        data = line_data()
        res = ffem_run(data, FeatureSet.unconstrained(1), small, np.random.default_rng(0))
        assert res.best.fitness < 1e-5

    def test_infinite_threshold_stops_at_zero(self, small):
        res = ffem_run(odd_data(), FeatureSet.unconstrained(1), small, np.random.default_rng(0), threshold=math.inf)
        assert res.generations == 0 and len(res.trace) == 1

    @pytest.fixture(scope="class")
    @staticmethod
    def noisy_run():
        rng = np.random.default_rng(3)
        x = rng.uniform(-1, 1, (40, 1))
        data = Dataset(x, np.sin(3 * x[:, 0]) + 0.1 * rng.normal(size=40))
        cfg = EvolutionConfig(pop_size=60, max_gen=30, max_len=20)
        F = FeatureSet(Interval(-2, 2), ((0,),), parity=Parity.NONE)
        return data, cfg, F

    def test_trace_and_limits(self, noisy_run, monkeypatch):
        data, cfg, F = noisy_run
        seen = []
        orig = ffem.Problem.individual

        def spy(self, core, traits=None):
            out = orig(self, core, traits)
            seen.append(out.length)
            return out

        monkeypatch.setattr(ffem.Problem, "individual", spy)
        res = ffem_run(data, F, cfg, np.random.default_rng(0))
        best = [r.best_rmse for r in res.trace]
        assert all(b <= a for a, b in zip(best, best[1:]))
        assert max(seen) <= cfg.max_len
        assert res.generations == cfg.max_gen
        yhat = ex.eval_batch(res.best.expr, data.X)
        assert res.best.fitness == pytest.approx(math.sqrt(np.mean((yhat - data.y) ** 2)), rel=1e-12)

    def test_deterministic(self, noisy_run):
        data, cfg, F = noisy_run
        a = ffem_run(data, F, cfg, np.random.default_rng(11))
        b = ffem_run(data, F, cfg, np.random.default_rng(11))
        assert ex.format_expr(a.best.expr) == ex.format_expr(b.best.expr)
        assert a.trace == b.trace

    def test_parent_picks_uniform(self, monkeypatch):
        picks = []
        orig = ffem._pick

        def spy(pop, k, tournament, rng):
            picks.append(k)
            return orig(pop, k, tournament, rng)

        monkeypatch.setattr(ffem, "_pick", spy)
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 1, (10, 1))
        data = Dataset(x, rng.normal(size=10))
        cfg = EvolutionConfig(pop_size=100, max_gen=1000, alpha=0.0, beta=0.0, threshold=0.0)
        ffem_run(data, FeatureSet.unconstrained(1), cfg, np.random.default_rng(1))
        counts = np.bincount(picks, minlength=100)
        assert counts.sum() == 100_000
        assert stats.chisquare(counts).pvalue > 0.01

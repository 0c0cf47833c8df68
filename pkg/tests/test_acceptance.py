"""Acceptance suite: one test per criterion, each at its stated tolerance.

The terminal summary prints one PASS/FAIL line per criterion.
"""

from __future__ import annotations

import json
import math
import re
import time
from dataclasses import replace

import mpmath
import numpy as np
import pytest

from plcensemble import cli
from plcensemble import ensemble as ens
from plcensemble.dataset import TEST_SPECS, TRAIN_SIZE, make_paper_splits
from plcensemble.detectors import (
    IforestParams,
    OcnnParams,
    OcsvmParams,
    average_path_length,
    fit_iforest,
    fit_ocnn,
    fit_ocsvm,
    score,
)
from plcensemble.evaluation import evaluate
from plcensemble.seeding import derive_seed
from plcensemble.stats import anova_oneway

# ---------------------------------------------------------------------------
# independent oracles (plain Python loops, no library code)


def oracle_majority(row):
    neg = [s for s in row if s < 0]
    pos = [s for s in row if s >= 0]
    side = neg if len(neg) > len(pos) else pos
    return math.fsum(side) / len(side)


def oracle_max(row):
    best = row[0]
    for s in row[1:]:
        if s > best:
            best = s
    return best


def oracle_soft(row):
    return math.fsum(row) / len(row)


def oracle_weighted(row, w):
    return oracle_max([wi * si for wi, si in zip(w, row)])


def _random_triples(rng, n):
    """Continuous draws mixed with coarse grids so zeros and ties are common."""
    cont = rng.uniform(-1, 1, size=(n, 3))
    grid = rng.integers(-4, 5, size=(n, 3)) / 4.0
    pick = rng.random((n, 3)) < 0.3
    return np.where(pick, grid, cont)


def normal_equations_r2(X, y):
    n = X.shape[0]
    A = np.column_stack([np.ones(n), X])
    beta = np.linalg.solve(A.T @ A, A.T @ y)
    resid = y - A @ beta
    sse = float(resid @ resid)
    sst = float(((y - y.mean()) ** 2).sum())
    return min(max(1.0 - sse / sst, 0.0), 1.0), math.sqrt(sse / n)


def longhand_anova(groups):
    values = [v for g in groups for v in g]
    grand = sum(values) / len(values)
    ssb = 0.0
    ssw = 0.0
    for g in groups:
        m = sum(g) / len(g)
        ssb += len(g) * (m - grand) ** 2
        for v in g:
            ssw += (v - m) ** 2
    dfb, dfw = len(groups) - 1, len(values) - len(groups)
    f = (ssb / dfb) / (ssw / dfw)
    # survival function of F(dfb, dfw) at f, in 50-digit arithmetic
    mpmath.mp.dps = 50
    x = mpmath.mpf(dfw) / (dfw + dfb * mpmath.mpf(f))
    p = mpmath.betainc(mpmath.mpf(dfw) / 2, mpmath.mpf(dfb) / 2, 0, x, regularized=True)
    return f, float(p), ssb, ssw


# ---------------------------------------------------------------------------


@pytest.mark.criterion("voting oracles: 4 rules x 10,000 triples, exact signs, 1e-12 values, < 1 s")
def test_voting_oracles():
    rng = np.random.default_rng(101)
    S = _random_triples(rng, 10_000)
    w = rng.uniform(0, 1, size=3)
    rows = S.tolist()

    t0 = time.perf_counter()
    got = {
        "majority": ens.vote_majority(S),
        "max": ens.vote_max(S),
        "soft": ens.vote_soft(S),
        "weighted": ens.vote_weighted(S, w),
    }
    elapsed = time.perf_counter() - t0

    expected = {
        "majority": np.array([oracle_majority(r) for r in rows]),
        "max": np.array([oracle_max(r) for r in rows]),
        "soft": np.array([oracle_soft(r) for r in rows]),
        "weighted": np.array([oracle_weighted(r, w.tolist()) for r in rows]),
    }
    for name in got:
        np.testing.assert_array_equal(got[name] < 0, expected[name] < 0, err_msg=name)
        np.testing.assert_allclose(got[name], expected[name], rtol=0, atol=1e-12, err_msg=name)
    assert elapsed < 1.0


@pytest.mark.criterion("normalization: 1,000 vectors sign-preserving, monotone, in [-1,1], persisted range bit-exact")
def test_normalization_properties():
    rng = np.random.default_rng(102)
    for i in range(1000):
        n = int(rng.integers(1, 200))
        kind = i % 4
        if kind == 0:
            v = rng.normal(size=n) * 10.0 ** rng.uniform(-9, 3)
        elif kind == 1:
            v = np.abs(rng.normal(size=n))  # all nonnegative
        elif kind == 2:
            v = -np.abs(rng.normal(size=n))  # all nonpositive
        else:
            v = rng.integers(-3, 4, size=n).astype(float)  # ties and zeros
        fr = ens.FeatureRange.of(v)
        out = ens.normalize_scores(v, fr)
        assert np.all((out >= 0) == (v >= 0))
        assert np.all((out > 0) == (v > 0))
        assert np.all((out >= -1.0) & (out <= 1.0))
        order = np.argsort(v, kind="stable")
        assert np.all(np.diff(out[order]) >= 0)
        # test-time path: the range goes through the model document and back
        persisted = json.loads(json.dumps([fr.min, fr.max]))
        again = ens.normalize_scores(v, ens.FeatureRange(*persisted))
        assert again.tobytes() == out.tobytes()
        # unseen values beyond the training range stay clamped and ordered
        probe = np.sort(rng.normal(size=50) * (np.abs(v).max() + 1) * 3)
        p_out = ens.normalize_scores(probe, fr)
        assert np.all(np.diff(p_out) >= 0) and np.all(np.abs(p_out) <= 1.0)
        assert np.all((p_out >= 0) == (probe >= 0))


@pytest.mark.criterion("weight learning: OLS = normal-equations R^2 (1e-9), dup = 1, const = 0, RMSE = 1-RMSE (1e-12), < 5 s")
def test_weight_learning():
    rng = np.random.default_rng(103)
    t0 = time.perf_counter()
    for _ in range(100):
        Z = rng.normal(size=(200, 2))
        A = rng.normal(size=(2, 3))
        D = Z @ A + rng.uniform(0.05, 2.0) * rng.normal(size=(200, 3))
        w_ols = ens.learn_weights(D, "ols")
        w_rmse = ens.learn_weights(D, "rmse")
        for j in range(3):
            r2, rmse = normal_equations_r2(np.delete(D, j, axis=1), D[:, j])
            assert abs(w_ols[j] - r2) <= 1e-9
            assert abs(w_rmse[j] - max(0.0, 1.0 - rmse)) <= 1e-12
    # duplicated and constant columns
    for _ in range(20):
        x = rng.normal(size=200)
        D = np.column_stack([x, x, rng.normal(size=200)])
        w = ens.learn_weights(D, "ols")
        assert abs(w[0] - 1.0) <= 1e-9 and abs(w[1] - 1.0) <= 1e-9
        D = np.column_stack([rng.normal(size=200), np.full(200, 0.3), rng.normal(size=200)])
        for learner in ens.WeightLearner:
            assert ens.learn_weights(D, learner)[1] == 0.0
    assert time.perf_counter() - t0 < 5.0


@pytest.mark.criterion("detector quantiles over 20 seeds and the 25-sigma outlier, < 2 min")
def test_detector_quantiles():
    t0 = time.perf_counter()
    nu = 0.05
    table2 = IforestParams(n_estimators=100, max_samples=256, contamination=0.007)
    frac = {"ocsvm": [], "ocnn": [], "iforest": []}
    caught = {"ocsvm": 0, "ocnn": 0, "iforest": 0}
    outlier = np.array([[25.0, 25.0]])
    for s in range(20):
        X = np.random.default_rng(s).normal(size=(500, 2))
        fitted = {
            "ocsvm": fit_ocsvm(X, OcsvmParams(nu=nu)),
            "ocnn": fit_ocnn(X, OcnnParams(nu=nu, rng_seed=derive_seed(s, "ocnn"))),
            "iforest": fit_iforest(X, replace(table2, rng_seed=derive_seed(s, "iforest"))),
        }
        for name, d in fitted.items():
            frac[name].append(float(np.mean(score(d, X) < 0)))
            caught[name] += int(score(d, outlier)[0] < 0)
    assert max(frac["ocsvm"]) <= nu + 0.02, frac["ocsvm"]
    assert max(frac["ocnn"]) <= nu + 0.05, frac["ocnn"]
    assert max(frac["iforest"]) <= 0.007 + 0.01, frac["iforest"]
    assert all(c >= 19 for c in caught.values()), caught
    assert time.perf_counter() - t0 < 120.0


@pytest.mark.criterion("isolation-forest analytics: c(2) = 1, c(n) vs harmonic formula (1e-12, n <= 1e6), a(x) in (0,1)")
def test_iforest_analytics():
    assert average_path_length(2) == 1.0
    mpmath.mp.dps = 40
    ns = sorted(set(list(range(2, 2001)) + np.unique(np.logspace(np.log10(2000), 6, 300).astype(int)).tolist() + [10**6]))
    got = np.asarray(average_path_length(np.array(ns)), dtype=float)
    for n, c in zip(ns, got):
        exact = 2 * mpmath.harmonic(n - 1) - mpmath.mpf(2 * (n - 1)) / n
        assert abs(c - float(exact)) <= 1e-12, n
    rng = np.random.default_rng(105)
    X = rng.normal(size=(2000, 4))
    forest = fit_iforest(X, IforestParams(rng_seed=5))
    probe = np.vstack([X, rng.normal(size=(500, 4)) * 50, np.full((1, 4), 1e6), X[:1]])
    a = forest.anomaly_measure(probe)
    assert np.all((a > 0) & (a < 1))


@pytest.mark.criterion("protocol shape: split sizes, compare --resamples 20 gives finite F and p, ANOVA fixture (1e-10)")
def test_protocol_shape(tmp_path, capsys):
    train, tests = make_paper_splits(0)
    assert train.n_samples == TRAIN_SIZE == 41580 and train.n_anomalies == 0
    assert [(t.n_samples, t.n_anomalies / t.n_samples) for t in tests] == [
        (5000, 0.1), (7000, 0.1), (13130, 0.2), (15000, 0.3), (18270, 0.5)
    ]
    assert [n for n, _ in TEST_SPECS] == [5000, 7000, 13130, 15000, 18270]

    # ANOVA fixture against the longhand sums-of-squares oracle
    for groups in ([[1, 2, 3], [2, 3, 4], [3, 4, 5]], [[0.3, 1.7, 2.2, 0.9], [1.1, 2.5, 3.9], [4.2, 3.3, 5.0, 4.4, 3.8]]):
        res = anova_oneway(groups)
        f, p, ssb, ssw = longhand_anova(groups)
        assert abs(res.f_value - f) <= 1e-10 * max(1.0, f)
        assert abs(res.p_value - p) <= 1e-10
        assert abs(res.ss_between - ssb) <= 1e-10 and abs(res.ss_within - ssw) <= 1e-10

    data = tmp_path / "data"
    assert cli.main(["simulate", "--out", str(data), "--seed", "0"]) == 0
    models = []
    for strategy in ("stacking", "majority"):
        path = tmp_path / f"{strategy}.json"
        assert cli.main(["train", str(data / "train.csv"), "--strategy", strategy, "--out", str(path)]) == 0
        models.append(str(path))
    capsys.readouterr()
    assert cli.main(["compare", *models, "--resamples", "20", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "20 replicates x 5 test-set specs" in out
    m = re.search(r"F=(\S+), p=(\S+) \(df=(\d+),(\d+)\)", out)
    assert m, out
    f_value, p_value = float(m.group(1)), float(m.group(2))
    assert math.isfinite(f_value) and math.isfinite(p_value) and 0.0 <= p_value <= 1.0
    assert (int(m.group(3)), int(m.group(4))) == (1, 2 * 100 - 2)


@pytest.mark.criterion("qualitative ordering: stacking mean F1 >= every other strategy, all >= 0.60, < 5 min")
def test_qualitative_ordering():
    t0 = time.perf_counter()
    seed = 0
    train, tests = make_paper_splits(seed)
    base = ens.fit_base(train.X, ens.DetectorParams.seeded(seed))
    mean_f1 = {}
    for strategy in ens.all_strategies(seed):
        model = ens.fit_ensemble(train.X, strategy, base=base)
        f1 = [evaluate(t.labels, ens.predict_ensemble(model, t.X)[0]).f1 for t in tests]
        mean_f1[strategy.name] = float(np.mean(f1))
    print("mean F1 per strategy: " + ", ".join(f"{k}={v:.4f}" for k, v in mean_f1.items()))
    assert time.perf_counter() - t0 < 300.0
    assert all(v >= 0.60 for v in mean_f1.values()), mean_f1
    others = {k: v for k, v in mean_f1.items() if k != "stacking"}
    assert mean_f1["stacking"] >= max(others.values()), mean_f1


@pytest.mark.criterion("serialization round-trip bit-identical for all strategies on 1,000 samples")
def test_serialization_roundtrip(small_train, small_test):
    base = ens.fit_base(small_train.X, ens.DetectorParams.seeded(3))
    X = small_test.X
    assert X.shape[0] == 1000
    kinds = set()
    for strategy in ens.all_strategies(3):
        model = ens.fit_ensemble(small_train.X, strategy, base=base)
        labels, final = ens.predict_ensemble(model, X)
        restored = ens.loads(ens.dumps(model))
        labels2, final2 = ens.predict_ensemble(restored, X)
        assert labels.tobytes() == labels2.tobytes(), strategy.name
        assert final.tobytes() == final2.tobytes(), strategy.name
        kinds.add(strategy.kind)
    assert kinds == set(ens.StrategyKind)

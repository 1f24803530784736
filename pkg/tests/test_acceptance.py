"""Acceptance criteria, one test each.

A PASS/FAIL line per criterion is printed in the pytest terminal summary.
Measured quantities are printed too (visible with ``-s`` or ``-rA``).
"""
import functools
import itertools
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from epx.cli import run
from epx.cv import FixedEpx, PlainForest, cross_validate, diversity_map, win_count
from epx.dataset import SynthSpec, from_arrays, group_by_names, permuted_labels, synth_generate
from epx.forest import ForestConfig, evaluate, fit
from epx.formation import EvalCache, FormationConfig, form_phalanxes, merge_ratio, run_formation
from epx.grouping import jaccard_distance, ward_cluster, ward_objective
from epx.metrics import ave_p, hit_curve, initial_enhancement, null_calibration

from mocks import TableEvaluator, calibration
from oracles import brute_force_avep, monte_carlo_avep, random_ranking_null, two_partitions

SEEDS = range(10)
FINAL_TREES = 500


def within(start, limit):
    elapsed = time.perf_counter() - start
    print(f"runtime {elapsed:.1f} s (limit {limit} s)")
    assert elapsed < limit, f"took {elapsed:.1f} s, limit {limit} s"


@functools.lru_cache(maxsize=None)
def planted_formation(seed):
    ds, truth = synth_generate(SynthSpec(), seed)
    result = form_phalanxes(ds, group_by_names(ds), FormationConfig(evaluator_seed=seed))
    return ds, truth, result


# ---------------------------------------------------------------------------


@pytest.mark.acceptance(1, "golden merge trace on the three-group example")
def test_golden_merge_trace():
    start = time.perf_counter()
    G1, G2, G3 = (0,), (1,), (2,)
    single = {G1: 0.045, G2: 0.040, G3: 0.035, (0, 1): 0.052, (0, 2): 0.037, (1, 2): 0.054, (0, 1, 2): 0.060}
    ens = {(G1, G2): 0.069, (G1, G3): 0.050, (G2, G3): 0.031, (G1, (1, 2)): 0.060 * 1.18}

    cache = EvalCache(TableEvaluator(single, ens))
    ratios = {pair: merge_ratio(cache, *pair) for pair in ((G1, G2), (G1, G3), (G2, G3))}
    print("first-iteration ratios", {k: round(v, 4) for k, v in ratios.items()})
    for pair, expected in (((G1, G2), 1.33), ((G1, G3), 1.35), ((G2, G3), 0.57)):
        assert abs(ratios[pair] - expected) <= 0.05

    ev = TableEvaluator(single, ens)
    result = run_formation([G1, G2, G3], ev, calibration(0.01, 0.03))
    events = result.merge.events
    assert [(e.first, e.second) for e in events] == [(G2, G3)]
    assert sorted(result.candidates) == [(0,), (1, 2)]
    assert result.merge.final_ratios[((0,), (1, 2))] == pytest.approx(1.18)
    assert sorted(result.phalanxes) == [(0,), (1, 2)]
    print("phalanxes", result.phalanxes, "fits", result.fit_counter)
    within(start, 1)


@pytest.mark.acceptance(2, "fit count at most d^2 (d(d+1)/2 without merges) on 200 instances")
def test_fit_count_bound():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    merged = unmerged = 0
    for inst in range(200):
        d = int(rng.integers(1, 13))
        ev = TableEvaluator(seed=int(rng.integers(2**31)), spread=float(rng.uniform(0.02, 0.6)))
        cal = calibration(0.05, float(rng.uniform(0.03, 0.2)))
        result = run_formation([(i,) for i in range(d)], ev, cal)
        assert result.fit_counter == len(ev.calls) == len(set(ev.calls))
        assert result.fit_counter <= d * d, (inst, d, result.fit_counter)
        if result.merge.events:
            merged += 1
        else:
            unmerged += 1
            assert result.fit_counter <= d * (d + 1) // 2, (inst, d, result.fit_counter)
    print(f"instances with merges {merged}, without {unmerged}")
    assert merged > 0 and unmerged > 0
    within(start, 10)


def compositions(n):
    if n == 0:
        yield ()
        return
    for first in range(1, n + 1):
        for rest in compositions(n - first):
            yield (first,) + rest


@pytest.mark.acceptance(3, "AveP equals the tie-ordering oracle (exhaustive N<=8, Monte Carlo N=50)")
def test_avep_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    configs = 0
    # every configuration up to exchangeable positions: a sequence of tie
    # blocks, each with its own number of actives; positions are shuffled
    for n in range(1, 9):
        for comp in compositions(n):
            for actives in itertools.product(*(range(g + 1) for g in comp)):
                if sum(actives) == 0:
                    continue
                scores, labels = [], []
                for b, (g, a) in enumerate(zip(comp, actives)):
                    scores += [float(len(comp) - b)] * g
                    labels += [1] * a + [0] * (g - a)
                perm = rng.permutation(n)
                s = np.array(scores)[perm]
                y = np.array(labels)[perm]
                worst = max(worst, abs(ave_p(s, y) - brute_force_avep(s.tolist(), y.tolist())))
                configs += 1
    print(f"exhaustive: {configs} configurations, max abs error {worst:.2e}")
    assert worst <= 1e-12

    mc_worst = 0.0
    for inst in range(3):
        scores = rng.integers(0, 12, 50).astype(float)
        labels = np.zeros(50, dtype=int)
        labels[rng.choice(50, 6, replace=False)] = 1
        exact = ave_p(scores, labels)
        mc = monte_carlo_avep(scores, labels, 1_000_000, seed=inst)
        mc_worst = max(mc_worst, abs(exact - mc))
    print(f"N=50 vs 1e6-draw Monte Carlo: max abs difference {mc_worst:.2e}")
    assert mc_worst <= 1e-3
    within(start, 30)


@pytest.mark.acceptance(4, "null calibration for N=4946, M=48, B=1000 against an independent simulation")
def test_null_calibration():
    start = time.perf_counter()
    n, m = 4946, 48
    # shape of the AID 348 assay: 48 actives among 4946 compounds, rate 0.0097
    assert round(m / n, 4) == 0.0097
    cal = null_calibration(n, m, B=1000, alpha=0.95, seed=1)
    again = null_calibration(n, m, B=1000, alpha=0.95, seed=1)
    assert np.array_equal(cal.samples, again.samples)
    assert (cal.a_median, cal.a_quantile) == (again.a_median, again.a_quantile)
    ref = random_ranking_null(n, m, 1000, seed=99)
    ref_median = float(np.sort(ref)[math.ceil(0.5 * 1000) - 1])
    ref_q = float(np.sort(ref)[math.ceil(0.95 * 1000) - 1])
    print(f"a_0.5 {cal.a_median:.5f} vs {ref_median:.5f}; a_0.95 {cal.a_quantile:.5f} vs {ref_q:.5f}")
    assert abs(cal.a_median - ref_median) <= 0.01
    assert abs(cal.a_quantile - ref_q) <= 0.01
    within(start, 5)


@pytest.mark.acceptance(5, "hit-curve and initial-enhancement identities")
def test_hit_curve_identities():
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n_obs = int(rng.integers(2, 400))
        m = int(rng.integers(1, n_obs + 1))
        labels = np.zeros(n_obs, dtype=int)
        labels[rng.choice(n_obs, m, replace=False)] = 1
        scores = rng.integers(0, max(2, n_obs // 3), n_obs).astype(float)
        curve = hit_curve(scores, labels)
        assert curve.hits[-1] == pytest.approx(m, abs=1e-9)
        n = int(rng.integers(1, n_obs + 1))
        assert initial_enhancement(scores, labels, n) == pytest.approx(curve.hits[n - 1] / n * n_obs / m, rel=1e-12)
    for n_obs, m in ((100, 5), (4946, 48), (37, 37), (20, 1)):
        labels = np.zeros(n_obs, dtype=int)
        labels[:m] = 1
        perfect = labels.astype(float) + np.linspace(0, 0.5, n_obs)[::-1]
        assert ave_p(perfect, labels) == 1.0
        for n in range(1, n_obs + 1):
            assert initial_enhancement(perfect, labels, n) == pytest.approx(min(n_obs / n, n_obs / m), rel=1e-12)
    within(start, 5)


@pytest.mark.acceptance(6, "forest sanity: OOB fraction, separable data, null band, thread invariance")
def test_forest_sanity():
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    n = 1000
    y = np.zeros(n, dtype=int)
    y[rng.choice(n, 50, replace=False)] = 1
    X = np.column_stack([y, rng.integers(0, 2, (n, 4))])
    ds = from_arrays(X, y)
    forest = fit(ds, range(ds.n_vars), ForestConfig(n_trees=200, seed=6))
    oob = float((forest.inbag == 0).mean())
    print(f"OOB fraction {oob:.4f} vs (1-1/n)^n = {(1 - 1 / n) ** n:.4f}")
    assert abs(oob - (1 - 1 / n) ** n) <= 0.01

    sep = evaluate(ds, range(ds.n_vars), ForestConfig(n_trees=150, seed=1))
    print(f"separable OOB AveP {sep.assessment:.4f}")
    assert sep.assessment >= 0.95

    noise_ds, _ = synth_generate(SynthSpec(n_obs=300, n_noise=10), 5)
    cal = null_calibration(noise_ds.n_obs, noise_ds.n_active, 1000, 0.95, seed=0)
    inside = 0
    for seed in range(20):
        rec = evaluate(permuted_labels(noise_ds, seed), range(noise_ds.n_vars), ForestConfig(n_trees=150, seed=seed))
        inside += rec.assessment <= cal.a_quantile
    print(f"permuted labels inside the null band: {inside}/20")
    assert inside >= 18

    big, _ = synth_generate(SynthSpec(n_obs=500, n_noise=20), 1)
    cfg = ForestConfig(n_trees=100, seed=3)
    one = fit(big, range(big.n_vars), cfg, threads=1)
    for threads in (2, 8):
        assert one.same_as(fit(big, range(big.n_vars), cfg, threads=threads))
    within(start, 120)


@pytest.mark.acceptance(7, "EPX beats a plain forest in most CV repeats in at least 7 of 10 seeds")
def test_epx_beats_forest():
    start = time.perf_counter()
    good = 0
    for seed in SEEDS:
        ds, _, formed = planted_formation(seed)
        cfg = ForestConfig(n_trees=FINAL_TREES)
        epx = cross_validate(ds, FixedEpx(tuple(formed.phalanxes), cfg), k=10, repeats=8, seed=seed)
        rf = cross_validate(ds, PlainForest(cfg), k=10, repeats=8, seed=seed)
        wins = win_count(epx, rf)
        good += wins > 4
        print(f"seed {seed}: p={len(formed.phalanxes)} EPX {epx.avep.mean():.3f} RF {rf.avep.mean():.3f} wins {wins}/8")
    print(f"seeds with a majority of wins: {good}/10")
    assert good >= 7
    within(start, 600)


@pytest.mark.acceptance(8, "Jaccard hand counts and exact two-block Ward recovery")
def test_jaccard_ward():
    start = time.perf_counter()
    cols = [c for c in itertools.product((0, 1), repeat=3) if any(c)]
    for xi, xj in itertools.product(cols, repeat=2):
        both = sum(a & b for a, b in zip(xi, xj))
        either = sum(a | b for a, b in zip(xi, xj))
        assert jaccard_distance(xi, xj) == pytest.approx(1 - both / either, abs=1e-15)
    D = np.full((6, 6), 0.9)
    D[:3, :3] = D[3:, 3:] = 0.1
    np.fill_diagonal(D, 0.0)
    best = min(two_partitions(6), key=lambda p: ward_objective(D, p))
    plan = ward_cluster(D, 2)
    assert {tuple(g) for g in plan.groups} == {tuple(g) for g in best} == {(0, 1, 2), (3, 4, 5)}
    within(start, 5)


@pytest.mark.acceptance(9, "diversity map: own-phalanx ranks better for >=80% of actives in >=7 of 10 seeds")
def test_diversity_map_shape():
    start = time.perf_counter()
    good = 0
    for seed in SEEDS:
        ds, truth, formed = planted_formation(seed)
        phalanxes = tuple(formed.phalanxes)
        homes = [next((k for k, px in enumerate(phalanxes) if set(block) <= set(px)), None) for block in truth.blocks]
        if None in homes or homes[0] == homes[1]:
            print(f"seed {seed}: blocks not in separate phalanxes {phalanxes}")
            continue
        cv = cross_validate(ds, FixedEpx(phalanxes, ForestConfig(n_trees=FINAL_TREES)), k=10, repeats=1, seed=seed)
        dm = diversity_map(ds, cv)
        mech = truth.mechanism[dm.rows]
        own = np.where(mech == 1, dm.ranks[:, homes[0]], dm.ranks[:, homes[1]])
        other = np.where(mech == 1, dm.ranks[:, homes[1]], dm.ranks[:, homes[0]])
        share = float(np.mean(own < other))
        good += share >= 0.8
        print(f"seed {seed}: columns {dm.columns} share {share:.2f}")
    print(f"seeds at or above 80%: {good}/10")
    assert good >= 7
    within(start, 300)


def cli_outputs(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def cli_session(root: Path, threads: int) -> None:
    t = ["--threads", str(threads)]
    data = root / "data/synth.csv"

    def go(*argv):
        assert run([str(a) for a in argv] + t) == 0, argv

    go("synth", "--seed", 11, "--out", root / "data")
    go("null", "--n", 4946, "--m", 48, "--b", 1000, "--alpha", 0.95, "--seed", 1, "--samples", "--out", root / "null")
    go("cluster-groups", "--data", data, "--out", root / "clusters")
    go("form", "--data", data, "--seed", 12, "--out", root / "form")
    go("fit", "--data", data, "--phalanxes", root / "form/phalanxes.txt", "--seed", 13, "--out", root / "fit")
    go("rank", "--model", root / "fit/model.json", "--data", data, "--out", root / "rank")
    go("cv", "--data", data, "--phalanxes", root / "form/phalanxes.txt", "--seed", 14, "--trees", 100,
       "--repeats", 2, "--out", root / "cv")
    go("diversity", "--data", data, "--phalanxes", root / "form/phalanxes.txt", "--seed", 15, "--trees", 100,
       "--out", root / "diversity")
    go("plot-hits", "--data", data, "--model", root / "fit/model.json", "--out", root / "hits")


@pytest.mark.acceptance(10, "every CLI subcommand byte-identical across runs and thread counts")
def test_cli_reproducible(tmp_path):
    start = time.perf_counter()
    outputs = {}
    for name, threads in (("a", 1), ("b", 1), ("c", 8)):
        # identical relative layout so manifests can be compared byte for byte
        root = tmp_path / name
        root.mkdir()
        cwd = os.getcwd()
        os.chdir(root)
        try:
            cli_session(Path("."), threads)
        finally:
            os.chdir(cwd)
        outputs[name] = cli_outputs(root)
    commands = {k.split("/")[0] for k in outputs["a"]}
    print(f"compared {len(outputs['a'])} files from {sorted(commands)}")
    assert len(commands) == 9
    assert outputs["a"] == outputs["b"]
    assert outputs["a"] == outputs["c"]
    within(start, 300)

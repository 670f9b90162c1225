"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``.  Learner runs use the
compiled engine with per-episode invariant checks on (``check=True``).
"""
import json
import math
import time

import numpy as np
import pytest

from ambrl import amb as A
from ambrl.checks import alpha_suite, brute_force_solution, check_solver, clip_sum
from ambrl.cli import main as cli_main
from ambrl.environments import (TreeInstanceSpec, kl_bernoulli, kl_half_vs_shifted, random_layered_mdp,
                                tree_lower_bound_base)
from ambrl.harness import ExperimentConfig, aggregate, run_cell, run_experiment
from ambrl.mdp import backward_induction

# Bonus scale for the two scaling experiments; see README for the calibration.
SCALING_C = 0.2


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail, t0):
        with capsys.disabled():
            print(f"\n[criterion {number:>2}] {'PASS' if ok else 'FAIL'}  {detail} ({time.perf_counter() - t0:.1f}s)")
        assert ok, detail
    return emit


def test_c01_exact_solver(report):
    t0 = time.perf_counter()
    res = check_solver(count=50, seed=2024)
    # the checker bounds S <= 6, A = 2, H <= 3
    report(1, res.ok and time.perf_counter() - t0 < 10, res.detail, t0)


def test_c02_alpha_weights(report):
    t0 = time.perf_counter()
    worst = min(min(v for k, v in alpha_suite(10_000, H).items() if k != "column_sum_t1_gap")
                for H in range(1, 11))
    elapsed = time.perf_counter() - t0
    report(2, worst >= -1e-9 and elapsed < 30, f"four properties, n <= 1e4, H = 1..10, min slack {worst:.3g}", t0)


def test_c03_expansion_identity(report):
    t0 = time.perf_counter()
    H, n = 4, 1000
    rng = np.random.default_rng(7)
    # targets in [0, H] keep the min(H, .) clamp inactive
    w = rng.integers(0, 2, n) + rng.uniform(0, 2, n) + 0.5 / np.sqrt(np.arange(1, n + 1))
    assert w.max() <= H
    q, worst = float(H), 0.0
    for t in range(1, n + 1):
        q = A.upper_update(q, t, w[t - 1], H)
        a0, alpha = A.alpha_weights(t, H)
        worst = max(worst, abs(q - (a0 * H + alpha @ w[:t])))
    report(3, worst <= 1e-9, f"{n} visits, max |incremental - closed form| = {worst:.2g}", t0)


def test_c04_clip_sum(report):
    t0 = time.perf_counter()
    slack = min(4 * c * c / e - clip_sum(c, e) for c in np.linspace(0.5, 4, 5) for e in np.linspace(0.01, 0.5, 5))
    report(4, slack >= 0 and time.perf_counter() - t0 < 5, f"5x5 grid, min slack {slack:.4g}", t0)


@pytest.fixture(scope="module")
def validity_runs():
    cfg = ExperimentConfig({"kind": "sj", "n": 8, "delta_min": 0.1}, "amb", 50_000, delta=0.1,
                           bonus_c=1.0, seeds=tuple(range(200)))
    t0 = time.perf_counter()
    runs = run_experiment(cfg)
    return runs, time.perf_counter() - t0


def _allowed(runs, delta=0.1):
    return delta + 3 * math.sqrt(delta * (1 - delta) / len(runs))


def test_c05_confidence_validity(report, validity_runs):
    t0 = time.perf_counter()
    runs, elapsed = validity_runs
    bad = sum(r.diagnostics["first_invalid_episode"] >= 0 for r in runs) / len(runs)
    lim = _allowed(runs)
    report(5, bad <= lim and elapsed < 600,
           f"invalid runs {bad:.1%} of {len(runs)} (limit {lim:.1%}), {elapsed:.0f}s of runs", t0)


def test_c06_optimal_action_survival(report, validity_runs):
    t0 = time.perf_counter()
    runs, _ = validity_runs
    lost = sum(r.diagnostics["first_optimal_eliminated_episode"] >= 0 for r in runs) / len(runs)
    lim = _allowed(runs)
    report(6, lost <= lim, f"optimal action eliminated in {lost:.1%} of runs (limit {lim:.1%})", t0)


def test_c07_sandwich_and_monotonicity(report, validity_runs):
    t0 = time.perf_counter()
    runs, _ = validity_runs
    envs = [{"kind": "sj", "n": 8, "delta_min": 0.1}, {"kind": "tree", "n": 8, "A": 2, "gamma": 0.1},
            {"kind": "random", "levels": [4, 4, 4], "A": 3, "seed": 2}]
    extra = []
    for env in envs:
        for algo in ("amb", "ucb"):
            for c in (0.1, 1.0):
                extra += run_experiment(ExperimentConfig(env, algo, 20_000, bonus_c=c, seeds=(0, 1, 2)))
    for env in envs:
        extra.append(run_cell(ExperimentConfig(env, "amb", 500, bonus_c=0.2), 0, engine="reference"))
    keys = ("sandwich_violations", "admissible_grew", "decided_shrank", "decided_thawed")
    total = runs + extra
    broken = sum(any(r.diagnostics[k] for k in keys) or np.any(np.diff(r.cum_regret) < 0) for r in total)
    # run_cell raises on any violation, so reaching here already means zero
    report(7, broken == 0, f"{len(total)} checked runs here (every suite run is checked), {broken} violating", t0)


def test_c08_log_regret(report):
    t0 = time.perf_counter()
    env = {"kind": "random", "levels": [10, 10, 10], "A": 3, "seed": 0, "min_gap": 0.15}
    cfg = ExperimentConfig(env, "amb", 2**18, bonus_c=SCALING_C, seeds=tuple(range(20)))
    sm = aggregate(run_experiment(cfg))
    r14, r16, r18 = (sm.mean_at(2**p) for p in (14, 16, 18))
    late, early = r18 - r16, r16 - r14
    report(8, late <= 1.5 * early and time.perf_counter() - t0 < 1800,
           f"R(2^14..2^18) = {r14:.0f}, {r16:.0f}, {r18:.0f}; increment ratio {late / early:.3f} (limit 1.5)", t0)


def test_c09_separation(report):
    t0 = time.perf_counter()
    ratios = {}
    for n in (10, 20, 40):
        means = {}
        for algo in ("amb", "ucb"):
            cfg = ExperimentConfig({"kind": "sj", "n": n, "delta_min": 0.05}, algo, 200_000,
                                   bonus_c=SCALING_C, seeds=tuple(range(20)))
            means[algo] = aggregate(run_experiment(cfg)).mean_at(200_000)
        ratios[n] = means["amb"] / means["ucb"]
    monotone = ratios[10] > ratios[20] > ratios[40]
    ok = ratios[40] <= 0.5 and monotone and time.perf_counter() - t0 < 3600
    detail = ", ".join(f"n={n}: {r:.3f}" for n, r in ratios.items())
    report(9, ok, f"AMB/UCB regret at K=2e5: {detail}; need n=40 <= 0.5 and decreasing", t0)


def test_c10_tree_family(report):
    t0 = time.perf_counter()
    gamma, sums, ok = 0.1, {}, True
    for n in (4, 8, 16):
        mdp = tree_lower_bound_base(TreeInstanceSpec(n, 2, gamma))
        sol = backward_induction(mdp)
        g = sol.gap[np.isfinite(sol.gap)]
        sums[n] = float(np.sum(1 / g[g > 1e-9]))
        ok &= mdp.num_states == 2 * n - 1 and abs(sol.gap_min_global - gamma) <= 1e-12
    rel = [(sums[2 * n] / sums[n]) / (math.log2(2 * n) / math.log2(n)) for n in (4, 8)]
    ok &= all(0.8 <= r <= 1.4 for r in rel) and time.perf_counter() - t0 < 5
    report(10, ok, f"sum 1/gap = {[round(sums[n], 3) for n in sums]}, growth vs log2 prediction "
                   f"{[round(r, 3) for r in rel]}", t0)


def test_c11_kl(report):
    t0 = time.perf_counter()
    xs = np.linspace(0.01, 0.25, 25)
    err = max(abs(kl_bernoulli(0.5, 0.5 + x) - kl_half_vs_shifted(x)) for x in xs)
    err_log = max(abs(kl_bernoulli(0.5, 0.5 + x) + 0.5 * math.log(1 - 4 * x * x)) for x in xs)
    slack = min(8 * x * x / 3 - kl_bernoulli(0.5, 0.5 + x) for x in xs)
    ok = max(err, err_log) <= 1e-12 and slack >= 0 and time.perf_counter() - t0 < 1
    report(11, ok, f"25 points, closed-form error {max(err, err_log):.2g}, min bound slack {slack:.3g}", t0)


def test_c12_reproducibility(report, tmp_path, capsys):
    t0 = time.perf_counter()
    env = "random:levels=3/3,A=2,seed=4"
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert cli_main(["run", "--env", env, "--episodes", "20000", "--seeds", "7", "--out", str(p)]) == 0
    same_run = a.read_bytes() == b.read_bytes()
    outs = []
    for seeds in ("0,1,2,3", "3,1,0,2"):
        d = tmp_path / seeds.replace(",", "")
        assert cli_main(["compare", "--env", env, "--episodes", "5000", "--seeds", seeds, "--out", str(d)]) == 0
        outs.append([(d / f).read_bytes() for f in ("amb.csv", "ucb.csv", "compare.json")])
    capsys.readouterr()
    same_cmp = outs[0] == outs[1]
    report(12, same_run and same_cmp, f"run byte-identical: {same_run}; compare order-independent: {same_cmp}", t0)

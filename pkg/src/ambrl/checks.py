"""Invariant suites behind ``ambrl check``.

Each suite returns a ``CheckResult``; none of them raise on failure.  The exact
solver is compared against enumeration of every deterministic policy, which
shares no code with backward induction.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .amb import alpha_weights, clip
from .environments import kl_bernoulli, random_layered_mdp
from .mdp import TabularMdp, backward_induction


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.2f}s)"


def enumerate_policy_values(mdp: TabularMdp) -> tuple[np.ndarray, np.ndarray]:
    """Every deterministic policy's per-state values, by explicit loops.

    Returns ``(policies, values)`` with shapes ``(A^S, S)``.
    """
    S, H = mdp.num_states, mdp.horizon
    levels = mdp.level_of
    choices = [range(int(k)) for k in mdp.num_actions]
    policies = np.array(list(itertools.product(*choices)), dtype=np.int64)
    values = np.zeros((len(policies), S))
    for p, pi in enumerate(policies):
        v = values[p]
        for s in sorted(range(S), key=lambda s: -levels[s]):
            a = pi[s]
            total = mdp.reward_mean[s, a]
            if levels[s] < H:
                for y in range(S):
                    if mdp.transition[s, a, y] != 0.0:
                        total += mdp.transition[s, a, y] * v[y]
            v[s] = total
    return policies, values


def brute_force_solution(mdp: TabularMdp) -> dict:
    """Optimal V, Q and V_0 by maximizing over all deterministic policies."""
    _, values = enumerate_policy_values(mdp)
    v = values.max(axis=0)
    S, A = mdp.num_states, mdp.max_actions
    q = np.full((S, A), np.nan)
    for s in range(S):
        for a in range(int(mdp.num_actions[s])):
            q[s, a] = mdp.reward_mean[s, a] + sum(
                mdp.transition[s, a, y] * v[y] for y in range(S) if mdp.transition[s, a, y] != 0.0)
    v0 = max(float(np.dot(mdp.initial, row)) for row in values)
    return {"v": v, "q": q, "v0": v0}


def _timed(name, fn) -> CheckResult:
    t0 = time.perf_counter()
    ok, detail = fn()
    return CheckResult(name, ok, detail, time.perf_counter() - t0)


def check_solver(count: int = 50, seed: int = 0) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for i in range(count):
            H = int(rng.integers(1, 4))
            sizes = _random_level_sizes(rng, H, max_states=6)
            mdp = random_layered_mdp(sizes, 2, int(rng.integers(1 << 31)))
            sol = backward_induction(mdp)
            bf = brute_force_solution(mdp)
            mask = mdp.action_mask
            err = max(np.max(np.abs(sol.v_star[:-1] - bf["v"])),
                      np.max(np.abs(sol.q_star[mask] - bf["q"][mask])),
                      abs(sol.v0_star - bf["v0"]))
            worst = max(worst, float(err))
        return worst <= 1e-12, f"{count} MDPs, max |DP - enumeration| = {worst:.3g}"
    return _timed("exact solver vs policy enumeration", run)


def _random_level_sizes(rng, H: int, max_states: int) -> list[int]:
    while True:
        sizes = [int(x) for x in rng.integers(1, 4, size=H)]
        if sum(sizes) <= max_states:
            return sizes


def alpha_suite(n_max: int, H: int) -> dict:
    """Worst-case slack of the four learning-rate weight properties for ``n <= n_max``.

    A property holds when its slack is nonnegative.  Weights are advanced by the
    recurrence ``w_n = (1 - alpha_n) w_{n-1}`` with ``alpha_n`` appended, and
    partial column sums accumulate ``sum_{n=t..N} w_n[t]`` for property (3).
    """
    target = 1 + 1 / H
    w = np.zeros(0)
    col = np.zeros(n_max)
    out = {"sum_to_one": math.inf, "sqrt_lower": math.inf, "sqrt_upper": math.inf,
           "column_sum": math.inf, "square_sum": math.inf}
    inv_sqrt = 1 / np.sqrt(np.arange(1, n_max + 1))
    a0 = 1.0
    for n in range(1, n_max + 1):
        alpha = (H + 1) / (H + n)
        w = np.append(w * (1 - alpha), alpha)
        a0 *= 1 - alpha
        col[:n] += w
        s = w.sum()
        out["sum_to_one"] = min(out["sum_to_one"], -abs(s - 1) - abs(a0))
        r = float(w @ inv_sqrt[:n])
        out["sqrt_lower"] = min(out["sqrt_lower"], r - inv_sqrt[n - 1])
        out["sqrt_upper"] = min(out["sqrt_upper"], 2 * inv_sqrt[n - 1] - r)
        out["column_sum"] = min(out["column_sum"], target - float(col[:n].max()))
        out["square_sum"] = min(out["square_sum"], 2 * H / n - float(w @ w))
    out["column_sum_t1_gap"] = target - float(col[0])
    return out


def check_alpha(n_max: int = 10_000, horizons=range(1, 11), tol: float = 1e-9) -> CheckResult:
    def run():
        worst = math.inf
        for H in horizons:
            slack = alpha_suite(n_max, H)
            worst = min(worst, *(v for k, v in slack.items() if k != "column_sum_t1_gap"))
            # closed form agrees with the recurrence at the end of the run
            a0, w = alpha_weights(n_max, H)
            if a0 != 0.0 or abs(w.sum() - 1) > tol:
                return False, f"alpha_weights({n_max}, {H}) does not sum to one"
        return worst >= -tol, f"n <= {n_max}, H in {list(horizons)}: min slack {worst:.3g}"
    return _timed("learning-rate weight properties", run)


def clip_sum(c: float, eps: float) -> float:
    n_max = math.ceil(c * c / eps ** 2)
    return math.fsum(clip(c / math.sqrt(n), eps) for n in range(1, n_max + 1))


def check_clip(grid: int = 5) -> CheckResult:
    def run():
        worst = math.inf
        for c in np.linspace(0.5, 4, grid):
            for eps in np.linspace(0.01, 0.5, grid):
                worst = min(worst, 4 * c * c / eps - clip_sum(c, eps))
        return worst >= 0, f"{grid}x{grid} grid, min slack {worst:.4g}"
    return _timed("clipped inverse-sqrt sum bound", run)


def check_kl(points: int = 25) -> CheckResult:
    def run():
        xs = np.linspace(0.25 / points, 0.25, points)
        err = max(abs(kl_bernoulli(0.5, 0.5 + x) + 0.5 * math.log(1 - 4 * x * x)) for x in xs)
        bound = min(8 * x * x / 3 - kl_bernoulli(0.5, 0.5 + x) for x in xs)
        return err <= 1e-12 and bound >= 0, f"closed-form error {err:.2g}, min bound slack {bound:.3g}"
    return _timed("Bernoulli KL closed form and quadratic bound", run)


def check_runs(episodes: int = 20_000, seeds=range(3)) -> CheckResult:
    from .harness import ExperimentConfig, InvariantViolation, run_experiment

    def run():
        envs = [{"kind": "sj", "n": 8, "delta_min": 0.1},
                {"kind": "random", "levels": [3, 3, 3], "A": 3, "seed": 1, "min_gap": 0.1},
                {"kind": "tree", "n": 4, "A": 2, "gamma": 0.1}]
        n = 0
        try:
            for env in envs:
                for algo in ("amb", "ucb"):
                    run_experiment(ExperimentConfig(env, algo, episodes, seeds=tuple(seeds)))
                    n += len(seeds)
        except InvariantViolation as e:
            return False, f"{e}"
        return True, f"{n} runs: bounds sandwiched, sets monotone, regret nondecreasing"
    return _timed("learner run invariants", run)


def run_all(full: bool = False) -> list[CheckResult]:
    if full:
        return [check_solver(50), check_alpha(10_000), check_clip(), check_kl(), check_runs(50_000, range(10))]
    return [check_solver(20), check_alpha(2_000, (1, 2, 5, 10)), check_clip(), check_kl(), check_runs()]

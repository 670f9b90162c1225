"""Instance generators: the two-level UCB-hard instance, the binary-tree
lower-bound family, random layered MDPs, and Bernoulli KL utilities."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp import GAP_TOL, TabularMdp, backward_induction


@dataclass(frozen=True)
class SjInstanceSpec:
    n: int
    delta_min: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"n must be an integer >= 3, got {self.n}")
        if not (0 < self.delta_min < 1 / 8):
            raise ValueError(f"delta_min must lie in (0, 1/8), got {self.delta_min}")


@dataclass(frozen=True)
class TreeInstanceSpec:
    num_leaves: int
    last_level_actions: int = 2
    gamma: float = 0.1
    leaf_actions: tuple[int, ...] | None = None

    def __post_init__(self):
        n = self.num_leaves
        if int(n) != n or n < 2 or n & (n - 1):
            raise ValueError(f"num_leaves must be a power of two >= 2, got {n}")
        if self.last_level_actions < 2:
            raise ValueError("last_level_actions must be >= 2")
        if not (0 < self.gamma <= 1 / 8):
            raise ValueError(f"gamma must lie in (0, 1/8], got {self.gamma}")
        if self.leaf_actions is not None:
            if len(self.leaf_actions) != n:
                raise ValueError("leaf_actions needs one entry per leaf")
            if self.leaf_actions[0] < 1 or any(
                    not 1 <= k <= self.last_level_actions for k in self.leaf_actions):
                raise ValueError("leaf action counts must lie in 1..last_level_actions")

    @property
    def num_states(self) -> int:
        return 2 * self.num_leaves - 1

    @property
    def horizon(self) -> int:
        return int(math.log2(self.num_leaves)) + 1


def sj_hard_instance(spec: SjInstanceSpec) -> TabularMdp:
    """Two-level instance on which optimistic bootstrapping pays per next-level state.

    ``s1`` starts every episode; ``a1`` moves to ``s2`` and ``a2`` spreads
    uniformly over ``s3..sn``.  Only ``a1`` pays at level 2, with mean
    ``1/2 + delta_min`` at ``s2`` and ``1/2`` elsewhere.
    """
    n, d = spec.n, spec.delta_min
    tail = [f"s{i}" for i in range(3, n + 1)]
    levels = [["s1"], ["s2", *tail]]
    rewards = {("s1", 0): 0.0, ("s1", 1): 0.0, ("s2", 0): 0.5 + d, ("s2", 1): 0.0}
    for x in tail:
        rewards[(x, 0)] = 0.5
        rewards[(x, 1)] = 0.0
    transitions = {
        ("s1", 0): {"s2": 1.0},
        ("s1", 1): {x: 1.0 / (n - 2) for x in tail},
    }
    return TabularMdp.from_tables(levels, rewards, transitions, {"s1": 1.0}, num_actions=2)


def _tree_levels(n: int) -> list[list[str]]:
    depth = int(math.log2(n))
    levels = [[f"u{h + 1}_{j + 1}" for j in range(2 ** h)] for h in range(depth)]
    levels.append([f"x{i + 1}" for i in range(n)])
    return levels


def tree_lower_bound_base(spec: TreeInstanceSpec) -> TabularMdp:
    """Complete binary tree whose leaves act as a bandit with one good arm.

    Internal node ``j`` of a level sends ``a1`` to child ``2j`` and ``a2`` to
    child ``2j+1`` (0-based), so the all-``a1`` path reaches leaf ``x1``.
    Internal rewards are 0; leaf arms pay Bernoulli(1/2) except ``(x1, a1)``,
    which pays Bernoulli(1/2 + gamma).
    """
    n, A = spec.num_leaves, spec.last_level_actions
    levels = _tree_levels(n)
    leaf_k = spec.leaf_actions or (A,) * n
    rewards: dict[tuple[str, int], float] = {}
    transitions: dict[tuple[str, int], dict[str, float]] = {}
    counts: dict[str, int] = {}
    for h in range(len(levels) - 1):
        for j, x in enumerate(levels[h]):
            counts[x] = 2
            for a in range(2):
                rewards[(x, a)] = 0.0
                transitions[(x, a)] = {levels[h + 1][2 * j + a]: 1.0}
    for i, x in enumerate(levels[-1]):
        counts[x] = leaf_k[i]
        for a in range(leaf_k[i]):
            rewards[(x, a)] = 0.5
    rewards[("x1", 0)] = 0.5 + spec.gamma
    return TabularMdp.from_tables(levels, rewards, transitions, {levels[0][0]: 1.0}, counts)


def tree_lower_bound_perturbed(base: TabularMdp, i: int, j: int, gamma: float) -> TabularMdp:
    """Copy of ``base`` with leaf ``x_i``'s action ``a_j`` raised to 1/2 + 2*gamma.

    ``i`` and ``j`` are 1-based, matching the leaf names ``x1..xn``.
    """
    leaves = base.levels[-1]
    if not (2 <= i <= len(leaves)):
        raise ValueError(f"leaf index must lie in 2..{len(leaves)}, got {i}")
    s = base.index[f"x{i}"]
    if not (1 <= j <= base.num_actions[s]):
        raise ValueError(f"action index must lie in 1..{base.num_actions[s]}, got {j}")
    R = base.reward_mean.copy()
    R[s, j - 1] = 0.5 + 2 * gamma
    return TabularMdp(base.levels, base.num_actions, R, base.transition, base.initial)


class ResampleBudgetExceeded(RuntimeError):
    pass


def random_layered_mdp(
    levels: list[int],
    A: int,
    seed: int,
    min_gap: float | None = None,
    max_resamples: int = 10_000,
) -> TabularMdp:
    """Random layered MDP with Dirichlet(1) transition rows and U[0,1] reward means.

    With ``min_gap`` set, states are drawn bottom-up and each state's reward and
    transition rows are redrawn until all of its gaps are at least ``min_gap``
    (which also forces a unique optimal action).  A state's gaps depend only on
    its own rows and the already-fixed next-level values, so the per-state
    rejection yields the same law as whole-instance rejection would.
    """
    if not levels or any(c < 1 for c in levels):
        raise ValueError("level sizes must be positive")
    if A < 2:
        raise ValueError("A must be >= 2")
    rng = np.random.default_rng(seed)
    H = len(levels)
    offsets = np.concatenate([[0], np.cumsum(levels)])
    S = int(offsets[-1])
    R = np.zeros((S, A))
    P = np.zeros((S, A, S))
    v_next = np.zeros(0)
    for h in range(H - 1, -1, -1):
        lo, hi = int(offsets[h]), int(offsets[h + 1])
        v_here = np.zeros(hi - lo)
        for s in range(lo, hi):
            for attempt in range(max_resamples):
                r = rng.random(A)
                if h + 1 < H:
                    w = rng.exponential(size=(A, levels[h + 1]))
                    rows = w / w.sum(axis=1, keepdims=True)
                    q = r + rows @ v_next
                else:
                    rows = None
                    q = r
                if min_gap is None or _separated(q, min_gap):
                    break
            else:
                raise ResampleBudgetExceeded(
                    f"state {s} (level {h + 1}) missed min_gap={min_gap} in {max_resamples} draws; "
                    f"lower min_gap or raise max_resamples")
            R[s] = r
            if rows is not None:
                P[s, :, offsets[h + 1]:offsets[h + 2]] = rows
            v_here[s - lo] = q.max()
        v_next = v_here
    mu = np.zeros(S)
    w = rng.exponential(size=levels[0])
    mu[: levels[0]] = w / w.sum()
    names = [[f"x{h + 1}_{j + 1}" for j in range(c)] for h, c in enumerate(levels)]
    mdp = TabularMdp(tuple(tuple(lvl) for lvl in names), np.full(S, A), R, P, mu)
    if min_gap is not None:
        sol = backward_induction(mdp)
        assert sol.gap_min_global >= min_gap - GAP_TOL and not sol.z_mul
    return mdp


def _separated(q: np.ndarray, min_gap: float) -> bool:
    top = np.sort(q)
    return top[-1] - top[-2] >= min_gap


def kl_bernoulli(p: float, q: float) -> float:
    """Relative entropy between Bernoulli(p) and Bernoulli(q), both in (0, 1)."""
    if not (0 < p < 1 and 0 < q < 1):
        raise ValueError(f"parameters must lie strictly inside (0,1), got p={p}, q={q}")
    if p == q:
        return 0.0
    return p * math.log(p / q) + (1 - p) * math.log((1 - p) / (1 - q))


def kl_half_vs_shifted(x: float) -> float:
    """Closed form of ``kl_bernoulli(1/2, 1/2 + x)``: ``-ln(1 - 4x^2) / 2``."""
    return -0.5 * math.log1p(-4 * x * x)

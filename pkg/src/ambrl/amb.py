"""Adaptive Multi-step Bootstrap: a model-free learner that keeps upper and lower
Q bounds, eliminates actions whose upper bound falls below the state's lower
value bound, and replaces bootstrapping through already-decided states by the
realized rewards collected there.

This module is the readable reference.  ``ambrl._kernels`` runs the same update
compiled for long experiments, and the test suite checks the two agree.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .mdp import TERMINAL, TabularMdp, Trajectory


@dataclass(frozen=True)
class AmbConfig:
    delta: float
    horizon: int
    num_episodes: int
    bonus_c: float = 1.0
    tolerance: float = 0.0

    def __post_init__(self):
        if not (0 < self.delta < 1 / 3):
            raise ValueError(f"delta must lie in (0, 1/3), got {self.delta}")
        if self.num_episodes < 1:
            raise ValueError("num_episodes must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.bonus_c <= 0:
            raise ValueError("bonus_c must be positive")
        if self.tolerance < 0:
            raise ValueError("tolerance must be nonnegative")

    def log_term(self, S: int, A: int) -> float:
        return math.log(S * A * self.num_episodes / self.delta)


def learning_rate(t: int, H: int) -> float:
    if t < 1:
        raise ValueError("learning rate is defined for t >= 1")
    return (H + 1) / (H + t)


def alpha_weights(n: int, H: int) -> tuple[float, np.ndarray]:
    """Weights of the initial value and of each of the ``n`` targets after ``n`` updates.

    ``weights[t-1]`` is ``alpha_t * prod_{j=t+1..n} (1 - alpha_j)``.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return 1.0, np.zeros(0)
    t = np.arange(1, n + 1)
    alpha = (H + 1) / (H + t)
    keep = 1.0 - alpha
    # suffix products prod_{j=t+1..n} keep_j; keep_1 = 0 so alpha0 is exactly 0
    suffix = np.ones(n)
    suffix[:-1] = np.cumprod(keep[::-1])[::-1][1:]
    return float(np.prod(keep)), alpha * suffix


def bonus(n: int, config: AmbConfig, S: int, A: int) -> float:
    if n < 1:
        raise ValueError("bonus is undefined before the first visit")
    H = config.horizon
    return config.bonus_c * math.sqrt(H ** 3 * config.log_term(S, A) / n)


def clip(x: float, y: float) -> float:
    return x if x >= y else 0.0


def upper_update(q: float, n: int, target: float, H: int) -> float:
    """One interpolation step of an upper bound toward ``target``, capped at ``H``."""
    a = learning_rate(n, H)
    return min(H, (1 - a) * q + a * target)


def lower_update(q: float, n: int, target: float, H: int) -> float:
    a = learning_rate(n, H)
    return max(0.0, (1 - a) * q + a * target)


@dataclass
class AmbState:
    """Mutable learner state.  Value arrays carry the termination state last."""

    q_upper: np.ndarray
    q_lower: np.ndarray
    v_upper: np.ndarray
    v_lower: np.ndarray
    visit_count: np.ndarray
    admissible: np.ndarray
    decided: np.ndarray
    horizon: int
    episode_index: int = 1

    @property
    def num_states(self) -> int:
        return self.q_upper.shape[0]

    def admissible_actions(self, x: int) -> list[int]:
        return [int(a) for a in np.flatnonzero(self.admissible[x])]

    def eliminated_pairs(self, num_actions) -> int:
        return int(np.sum(num_actions) - self.admissible.sum())

    def policy(self) -> np.ndarray:
        return np.array([select_action(x, self) for x in range(self.num_states)], dtype=np.int64)


def init(mdp: TabularMdp, config: AmbConfig) -> AmbState:
    S, A, H = mdp.num_states, mdp.max_actions, mdp.horizon
    if config.horizon != H:
        raise ValueError(f"config horizon {config.horizon} does not match the MDP's {H}")
    v_upper = np.full(S + 1, float(H))
    v_upper[TERMINAL] = 0.0
    return AmbState(
        q_upper=np.full((S, A), float(H)),
        q_lower=np.zeros((S, A)),
        v_upper=v_upper,
        v_lower=np.zeros(S + 1),
        visit_count=np.zeros((S, A), dtype=np.int64),
        admissible=mdp.action_mask.copy(),
        decided=np.zeros(S, dtype=bool),
        horizon=H,
    )


def select_action(x: int, amb: AmbState) -> int:
    """Sole surviving action, else the admissible action with the widest interval."""
    acts = np.flatnonzero(amb.admissible[x])
    if len(acts) == 1:
        return int(acts[0])
    width = amb.q_upper[x, acts] - amb.q_lower[x, acts]
    return int(acts[np.argmax(width)])


def first_undecided_suffix(traj: Trajectory, h: int, decided: np.ndarray) -> tuple[int, int]:
    """First level after ``h`` (1-based) whose visited state is undecided.

    Returns ``(H + 1, TERMINAL)`` when every later state is decided.
    """
    H = len(traj)
    if not 1 <= h <= H:
        raise ValueError(f"level must lie in 1..{H}, got {h}")
    for hp in range(h + 1, H + 1):
        s = int(traj.states[hp - 1])
        if not decided[s]:
            return hp, s
    return H + 1, TERMINAL


def monte_carlo_return(traj: Trajectory, h: int, h_next: int) -> float:
    """Sum of realized rewards at levels ``h .. h_next - 1``."""
    if not (1 <= h < h_next <= len(traj) + 1):
        raise ValueError(f"need 1 <= h < h' <= H+1, got h={h}, h'={h_next}")
    return float(np.sum(traj.rewards[h - 1:h_next - 1]))


def update_episode(amb: AmbState, traj: Trajectory, config: AmbConfig) -> AmbState:
    """Backward pass over one episode followed by elimination.  Mutates ``amb``."""
    H = amb.horizon
    S, A = amb.q_upper.shape
    if len(traj) != H:
        raise ValueError(f"trajectory has {len(traj)} steps, expected {H}")
    if len(set(traj.states.tolist())) != H:
        raise ValueError("a layered episode visits each state at most once")
    # bootstrap values and the decided set are those at the start of the episode
    decided = amb.decided.copy()
    v_up_prev = amb.v_upper.copy()
    v_lo_prev = amb.v_lower.copy()
    for h in range(H, 0, -1):
        s, a = int(traj.states[h - 1]), int(traj.actions[h - 1])
        if decided[s]:
            continue
        if not amb.admissible[s, a]:
            raise ValueError(f"trajectory plays eliminated action {a} at state {s}")
        amb.visit_count[s, a] += 1
        n = int(amb.visit_count[s, a])
        hp, sp = first_undecided_suffix(traj, h, decided)
        ret = monte_carlo_return(traj, h, hp)
        b = bonus(n, config, S, A)
        amb.q_upper[s, a] = upper_update(amb.q_upper[s, a], n, ret + v_up_prev[sp] + b, H)
        amb.q_lower[s, a] = lower_update(amb.q_lower[s, a], n, ret + v_lo_prev[sp] - b, H)
        acts = amb.admissible[s]
        amb.v_upper[s] = amb.q_upper[s, acts].max()
        amb.v_lower[s] = amb.q_lower[s, acts].max()
    eliminate(amb, config.tolerance)
    amb.episode_index += 1
    return amb


def eliminate(amb: AmbState, tolerance: float = 0.0) -> AmbState:
    """Drop actions whose upper bound is below the state's lower value bound."""
    keep = amb.q_upper >= amb.v_lower[:-1, None] - tolerance
    amb.admissible &= keep
    if not amb.admissible.any(axis=1).all():
        raise AssertionError("elimination emptied an admissible set")
    amb.decided = amb.admissible.sum(axis=1) == 1
    return amb


def snapshot(amb: AmbState, mdp: TabularMdp | None = None) -> dict:
    names = list(mdp.states) if mdp is not None else [str(i) for i in range(amb.num_states)]
    rows = {}
    for s, x in enumerate(names):
        k = int(mdp.num_actions[s]) if mdp is not None else amb.q_upper.shape[1]
        rows[x] = {
            "q_upper": [float(v) for v in amb.q_upper[s, :k]],
            "q_lower": [float(v) for v in amb.q_lower[s, :k]],
            "v_upper": float(amb.v_upper[s]),
            "v_lower": float(amb.v_lower[s]),
            "visit_count": [int(v) for v in amb.visit_count[s, :k]],
            "admissible": amb.admissible_actions(s),
        }
    return {
        "episode_index": amb.episode_index,
        "decided": [names[s] for s in np.flatnonzero(amb.decided)],
        "states": rows,
    }


def dump_snapshot(amb: AmbState, path, mdp: TabularMdp | None = None) -> None:
    with open(path, "w") as f:
        json.dump(snapshot(amb, mdp), f, indent=2)
        f.write("\n")

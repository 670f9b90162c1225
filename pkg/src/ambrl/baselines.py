"""Optimistic Q-learning with Hoeffding bonuses, sharing AMB's step size and bonus."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .amb import AmbConfig, bonus, upper_update
from .mdp import TERMINAL, TabularMdp, Trajectory


@dataclass
class UcbState:
    q_upper: np.ndarray
    v_upper: np.ndarray
    visit_count: np.ndarray
    action_mask: np.ndarray
    horizon: int
    episode_index: int = 1

    @property
    def num_states(self) -> int:
        return self.q_upper.shape[0]

    def policy(self) -> np.ndarray:
        return np.array([ucb_select_action(x, self) for x in range(self.num_states)], dtype=np.int64)


def ucb_init(mdp: TabularMdp, config: AmbConfig) -> UcbState:
    S, A, H = mdp.num_states, mdp.max_actions, mdp.horizon
    if config.horizon != H:
        raise ValueError(f"config horizon {config.horizon} does not match the MDP's {H}")
    v_upper = np.full(S + 1, float(H))
    v_upper[TERMINAL] = 0.0
    return UcbState(np.full((S, A), float(H)), v_upper,
                    np.zeros((S, A), dtype=np.int64), mdp.action_mask.copy(), H)


def ucb_select_action(x: int, ucb: UcbState) -> int:
    acts = np.flatnonzero(ucb.action_mask[x])
    return int(acts[np.argmax(ucb.q_upper[x, acts])])


def ucb_target(reward: float, v_next: float, b: float) -> float:
    return reward + v_next + b


def ucb_update_episode(ucb: UcbState, traj: Trajectory, config: AmbConfig) -> UcbState:
    H = ucb.horizon
    S, A = ucb.q_upper.shape
    if len(traj) != H:
        raise ValueError(f"trajectory has {len(traj)} steps, expected {H}")
    v_prev = ucb.v_upper.copy()
    for h in range(H, 0, -1):
        s, a = int(traj.states[h - 1]), int(traj.actions[h - 1])
        nxt = int(traj.states[h]) if h < H else TERMINAL
        ucb.visit_count[s, a] += 1
        n = int(ucb.visit_count[s, a])
        b = bonus(n, config, S, A)
        ucb.q_upper[s, a] = upper_update(ucb.q_upper[s, a], n, ucb_target(traj.rewards[h - 1], v_prev[nxt], b), H)
        ucb.v_upper[s] = min(H, ucb.q_upper[s, ucb.action_mask[s]].max())
    ucb.episode_index += 1
    return ucb

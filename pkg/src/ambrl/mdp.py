"""Layered tabular episodic MDPs: construction, validation, exact solution, sampling.

States are indexed globally and contiguously by level, so level ``h`` (1-based)
owns the index range ``level_offsets[h-1]:level_offsets[h]``.  Actions are
0-based integers; ``a1`` in the usual notation is action ``0``.  The termination
state is not stored in the transition table; value arrays that need it carry one
extra trailing slot, addressed as index ``TERMINAL`` (``-1``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

TERMINAL = -1
GAP_TOL = 1e-9
MASS_TOL = 1e-12


class InvalidMdpError(ValueError):
    """Raised when an operation needs a well-formed MDP and gets something else."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid MDP: " + "; ".join(self.violations))


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite-horizon MDP whose state set is partitioned into levels ``1..H``.

    ``transition[s, a]`` is a dense row over all states; for a well-formed MDP it
    is supported on the next level, and rows of last-level states are all zero
    (their successor is the termination state).  Padded actions beyond
    ``num_actions[s]`` carry zero reward and zero transition mass.
    """

    levels: tuple[tuple[str, ...], ...]
    num_actions: np.ndarray
    reward_mean: np.ndarray
    transition: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        levels = tuple(tuple(str(x) for x in lvl) for lvl in self.levels)
        object.__setattr__(self, "levels", levels)
        for name, dtype in (("num_actions", np.int64), ("reward_mean", float),
                            ("transition", float), ("initial", float)):
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def horizon(self) -> int:
        return len(self.levels)

    @property
    def num_states(self) -> int:
        return int(self.num_actions.shape[0])

    @property
    def max_actions(self) -> int:
        return int(self.reward_mean.shape[1])

    @cached_property
    def states(self) -> tuple[str, ...]:
        return tuple(x for lvl in self.levels for x in lvl)

    @cached_property
    def index(self) -> dict[str, int]:
        return {x: i for i, x in enumerate(self.states)}

    @cached_property
    def level_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([len(lvl) for lvl in self.levels])]).astype(np.int64)

    @cached_property
    def level_of(self) -> np.ndarray:
        """1-based level of every state."""
        return np.repeat(np.arange(1, self.horizon + 1), [len(lvl) for lvl in self.levels])

    @cached_property
    def action_mask(self) -> np.ndarray:
        return np.arange(self.max_actions)[None, :] < self.num_actions[:, None]

    @cached_property
    def cum_transition(self) -> np.ndarray:
        return np.cumsum(self.transition, axis=2)

    @cached_property
    def cum_initial(self) -> np.ndarray:
        return np.cumsum(self.initial)

    def level_slice(self, h: int) -> slice:
        return slice(int(self.level_offsets[h - 1]), int(self.level_offsets[h]))

    @classmethod
    def from_tables(
        cls,
        levels: Sequence[Sequence[str]],
        rewards: Mapping[tuple[str, int], float],
        transitions: Mapping[tuple[str, int], Mapping[str, float]],
        initial: Mapping[str, float],
        num_actions: Mapping[str, int] | int | None = None,
    ) -> "TabularMdp":
        """Build from name-keyed tables.  Missing reward entries default to 0."""
        names = [x for lvl in levels for x in lvl]
        idx = {x: i for i, x in enumerate(names)}
        if len(idx) != len(names):
            raise InvalidMdpError(["state names are not unique"])
        if num_actions is None:
            counts = {x: 0 for x in names}
            for (x, a) in list(rewards) + list(transitions):
                counts[x] = max(counts[x], a + 1)
        elif isinstance(num_actions, int):
            counts = {x: num_actions for x in names}
        else:
            counts = dict(num_actions)
        S = len(names)
        A = max(counts.values()) if counts else 0
        R = np.zeros((S, A))
        P = np.zeros((S, A, S))
        mu = np.zeros(S)
        for (x, a), m in rewards.items():
            R[idx[x], a] = m
        for (x, a), row in transitions.items():
            for y, p in row.items():
                P[idx[x], a, idx[y]] = p
        for x, p in initial.items():
            mu[idx[x]] = p
        return cls(tuple(tuple(lvl) for lvl in levels),
                   np.array([counts[x] for x in names]), R, P, mu)


@dataclass(frozen=True)
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(mdp: TabularMdp) -> ValidationReport:
    """Check every structural invariant; never raises."""
    bad: list[str] = []
    warn: list[str] = []
    S = len(mdp.states)
    if mdp.horizon < 1:
        bad.append("horizon must be at least 1")
    if len(set(mdp.states)) != S:
        bad.append("state names are not unique")
    if mdp.num_actions.shape != (S,):
        bad.append(f"num_actions has shape {mdp.num_actions.shape}, expected ({S},)")
        return ValidationReport(bad, warn)
    A = mdp.max_actions
    if mdp.reward_mean.shape != (S, A) or mdp.transition.shape != (S, A, S) or mdp.initial.shape != (S,):
        bad.append("table shapes are inconsistent with the state/action counts")
        return ValidationReport(bad, warn)
    if np.any(mdp.num_actions < 1) or np.any(mdp.num_actions > A):
        bad.append("every state needs between 1 and max_actions actions")
        return ValidationReport(bad, warn)

    name = mdp.states
    mask = mdp.action_mask
    for s, a in zip(*np.nonzero(mask)):
        m = mdp.reward_mean[s, a]
        if not (0.0 <= m <= 1.0):
            bad.append(f"reward mean out of [0,1] at ({name[s]}, a{a + 1}): {m!r}")
    if np.any(mdp.reward_mean[~mask] != 0) or np.any(mdp.transition[~mask] != 0):
        bad.append("padded actions carry nonzero reward or transition mass")
    if np.any(mdp.transition < 0) or np.any(mdp.initial < 0):
        bad.append("negative probability")

    H = mdp.horizon
    for h in range(1, H + 1):
        sl = mdp.level_slice(h)
        for s in range(sl.start, sl.stop):
            for a in range(int(mdp.num_actions[s])):
                row = mdp.transition[s, a]
                if h == H:
                    if np.any(row != 0):
                        bad.append(f"last-level state {name[s]} has outgoing transitions")
                    continue
                nxt = mdp.level_slice(h + 1)
                if np.any(row[: nxt.start] != 0) or np.any(row[nxt.stop:] != 0):
                    bad.append(f"transition from ({name[s]}, a{a + 1}) leaves level {h + 1}")
                total = row.sum()
                if abs(total - 1.0) > MASS_TOL:
                    bad.append(f"row mass ≠ 1 at ({name[s]}, a{a + 1}): {total!r}")
    first = mdp.level_slice(1)
    if np.any(mdp.initial[first.stop:] != 0):
        bad.append("initial distribution puts mass outside level 1")
    if abs(mdp.initial.sum() - 1.0) > MASS_TOL:
        bad.append(f"initial mass ≠ 1: {mdp.initial.sum()!r}")

    if not bad:
        reach = mdp.initial > 0
        for h in range(1, H):
            sl = mdp.level_slice(h)
            src = reach[sl]
            reach = reach | (mdp.transition[sl][src].sum(axis=(0, 1)) > 0)
        for s in np.flatnonzero(~reach):
            warn.append(f"state {name[s]} is unreachable")
    return ValidationReport(bad, warn)


def _require_valid(mdp: TabularMdp) -> None:
    report = validate(mdp)
    if not report.ok:
        raise InvalidMdpError(report.violations)


@dataclass(frozen=True, eq=False)
class ExactSolution:
    """Optimal values and gaps.  Entries for padded actions are NaN."""

    v_star: np.ndarray
    q_star: np.ndarray
    gap: np.ndarray
    gap_min_global: float
    gap_min_local: np.ndarray
    z_opt: frozenset[tuple[int, int]]
    z_mul: frozenset[tuple[int, int]]
    v0_star: float

    @property
    def optimal_mask(self) -> np.ndarray:
        return np.nan_to_num(self.gap, nan=np.inf) <= GAP_TOL

    def greedy_policy(self) -> np.ndarray:
        """Argmax of ``q_star`` with lowest-index tie-breaking."""
        return np.argmax(np.nan_to_num(self.q_star, nan=-np.inf), axis=1)

    @property
    def unique_optimal(self) -> bool:
        return not self.z_mul


def backward_induction(mdp: TabularMdp) -> ExactSolution:
    _require_valid(mdp)
    S, A, H = mdp.num_states, mdp.max_actions, mdp.horizon
    mask = mdp.action_mask
    v = np.zeros(S + 1)
    q = np.full((S, A), np.nan)
    for h in range(H, 0, -1):
        sl = mdp.level_slice(h)
        qh = mdp.reward_mean[sl] + mdp.transition[sl] @ v[:S]
        qh = np.where(mask[sl], qh, np.nan)
        q[sl] = qh
        v[sl] = np.nanmax(qh, axis=1)
    gap = v[:S, None] - q
    opt = np.nan_to_num(gap, nan=np.inf) <= GAP_TOL
    n_opt = opt.sum(axis=1)
    z_opt = frozenset((int(s), int(a)) for s, a in zip(*np.nonzero(opt)))
    z_mul = frozenset((s, a) for s, a in z_opt if n_opt[s] > 1)
    suboptimal = np.where(mask & ~opt, gap, np.inf)
    local = np.where(n_opt > 1, 0.0, suboptimal.min(axis=1))
    positive = gap[mask & ~opt]
    gmin = float(positive.min()) if positive.size else float("inf")
    v0 = float(mdp.initial @ v[:S])
    for arr in (v, q, gap, local):
        arr.setflags(write=False)
    return ExactSolution(v, q, gap, gmin, local, z_opt, z_mul, v0)


def check_policy(mdp: TabularMdp, pi) -> np.ndarray:
    pi = np.asarray(pi)
    if pi.shape != (mdp.num_states,) or not np.issubdtype(pi.dtype, np.integer):
        raise ValueError(f"policy must be an integer array of shape ({mdp.num_states},)")
    if np.any(pi < 0) or np.any(pi >= mdp.num_actions):
        bad = [mdp.states[s] for s in np.flatnonzero((pi < 0) | (pi >= mdp.num_actions))]
        raise ValueError(f"policy picks invalid actions at {bad}")
    return pi.astype(np.int64)


def policy_state_values(mdp: TabularMdp, pi) -> np.ndarray:
    """``V^pi`` for every state, with a trailing 0 for the termination state."""
    pi = check_policy(mdp, pi)
    S = mdp.num_states
    v = np.zeros(S + 1)
    rows = np.arange(S)
    for h in range(mdp.horizon, 0, -1):
        sl = mdp.level_slice(h)
        r, a = rows[sl], pi[sl]
        v[sl] = mdp.reward_mean[r, a] + mdp.transition[r, a] @ v[:S]
    return v


def policy_value(mdp: TabularMdp, pi) -> float:
    """Exact expected return ``V^pi_0`` of a deterministic policy."""
    return float(mdp.initial @ policy_state_values(mdp, pi)[:-1])


@dataclass(frozen=True)
class Trajectory:
    episode_index: int
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __len__(self) -> int:
        return len(self.states)


class EpisodeStreams:
    """Independent random streams for initial states, transitions and rewards.

    Each episode consumes one initial draw, ``H-1`` transition draws and ``H``
    reward draws, in that layout, so bulk draws of shape ``(B, H-1)`` reproduce
    ``B`` consecutive episodes exactly.
    """

    def __init__(self, seed: int | np.random.SeedSequence):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        a, b, c = ss.spawn(3)
        self.initial = np.random.Generator(np.random.PCG64(a))
        self.transition = np.random.Generator(np.random.PCG64(b))
        self.reward = np.random.Generator(np.random.PCG64(c))

    def draw(self, batch: int, horizon: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.initial.random(batch),
                self.transition.random((batch, horizon - 1)),
                self.reward.random((batch, horizon)))


def _inverse_cdf(cum: np.ndarray, probs: np.ndarray, lo: int, hi: int, u: float) -> int:
    for j in range(lo, hi):
        if u < cum[j]:
            return j
    # u landed above a row total that rounded below 1
    for j in range(hi - 1, lo - 1, -1):
        if probs[j] > 0:
            return j
    raise AssertionError("empty distribution")


def sample_episode(mdp: TabularMdp, pi, streams: EpisodeStreams, episode_index: int = 0) -> Trajectory:
    pi = check_policy(mdp, pi)
    H = mdp.horizon
    u0, ut, ur = streams.draw(1, H)
    return _rollout(mdp, pi, u0[0], ut[0], ur[0], episode_index)


def _rollout(mdp, pi, u0, ut, ur, k) -> Trajectory:
    H = mdp.horizon
    off = mdp.level_offsets
    states = np.empty(H, dtype=np.int64)
    actions = np.empty(H, dtype=np.int64)
    rewards = np.empty(H, dtype=np.int64)
    s = _inverse_cdf(mdp.cum_initial, mdp.initial, int(off[0]), int(off[1]), u0)
    for h in range(H):
        a = int(pi[s])
        states[h], actions[h] = s, a
        rewards[h] = 1 if ur[h] < mdp.reward_mean[s, a] else 0
        if h + 1 < H:
            s = _inverse_cdf(mdp.cum_transition[s, a], mdp.transition[s, a],
                             int(off[h + 1]), int(off[h + 2]), ut[h])
    return Trajectory(k, states, actions, rewards)


# -- serialization -------------------------------------------------------------

def mdp_to_dict(mdp: TabularMdp) -> dict:
    names = mdp.states
    rewards: dict[str, list[float]] = {}
    transitions: dict[str, list[list[list]]] = {}
    for s, x in enumerate(names):
        k = int(mdp.num_actions[s])
        rewards[x] = [float(m) for m in mdp.reward_mean[s, :k]]
        if mdp.level_of[s] < mdp.horizon:
            transitions[x] = [
                [[names[y], float(mdp.transition[s, a, y])] for y in np.flatnonzero(mdp.transition[s, a])]
                for a in range(k)
            ]
    return {
        "horizon": mdp.horizon,
        "levels": [list(lvl) for lvl in mdp.levels],
        "rewards": rewards,
        "transitions": transitions,
        "initial": {names[s]: float(mdp.initial[s]) for s in np.flatnonzero(mdp.initial)},
    }


def mdp_from_dict(doc: Mapping) -> TabularMdp:
    levels = [list(lvl) for lvl in doc["levels"]]
    if "horizon" in doc and int(doc["horizon"]) != len(levels):
        raise InvalidMdpError([f"horizon {doc['horizon']} does not match {len(levels)} levels"])
    counts = {x: len(m) for x, m in doc["rewards"].items()}
    rewards = {(x, a): m for x, ms in doc["rewards"].items() for a, m in enumerate(ms)}
    transitions = {}
    for x, per_action in doc.get("transitions", {}).items():
        counts[x] = max(counts.get(x, 0), len(per_action))
        for a, row in enumerate(per_action):
            transitions[(x, a)] = {y: p for y, p in row}
    missing = [x for lvl in levels for x in lvl if x not in counts]
    if missing:
        raise InvalidMdpError([f"no actions declared for {missing}"])
    return TabularMdp.from_tables(levels, rewards, transitions, doc["initial"], counts)


def dumps(mdp: TabularMdp) -> str:
    # json writes floats with the shortest round-tripping repr, so load(save(m)) is exact
    return json.dumps(mdp_to_dict(mdp), indent=2) + "\n"


def loads(text: str) -> TabularMdp:
    return mdp_from_dict(json.loads(text))


def save(mdp: TabularMdp, path) -> None:
    Path(path).write_text(dumps(mdp))


def load(path) -> TabularMdp:
    return loads(Path(path).read_text())

import numpy as np
import pytest

from ambrl.environments import SjInstanceSpec, sj_hard_instance
from ambrl.mdp import TabularMdp


def bandit(means):
    k = len(means)
    return TabularMdp.from_tables([["x"]], {("x", a): m for a, m in enumerate(means)}, {}, {"x": 1.0}, k)


def chain(H, A=2, reward=1.0):
    """Deterministic chain: every action moves to the single next-level state."""
    levels = [[f"c{h}"] for h in range(1, H + 1)]
    rewards = {(f"c{h}", a): reward for h in range(1, H + 1) for a in range(A)}
    trans = {(f"c{h}", a): {f"c{h + 1}": 1.0} for h in range(1, H) for a in range(A)}
    return TabularMdp.from_tables(levels, rewards, trans, {"c1": 1.0}, A)


@pytest.fixture
def two_arm():
    return bandit([0.7, 0.3])


@pytest.fixture
def sj8():
    return sj_hard_instance(SjInstanceSpec(8, 0.1))


def mc_policy_value(mdp, pi, n, seed):
    """Vectorized Monte-Carlo estimate of a policy's return: (mean, standard error)."""
    rng = np.random.default_rng(seed)
    S = mdp.num_states
    s = rng.choice(S, size=n, p=mdp.initial)
    total = np.zeros(n)
    for h in range(mdp.horizon):
        a = pi[s]
        total += rng.random(n) < mdp.reward_mean[s, a]
        if h + 1 < mdp.horizon:
            cum = np.cumsum(mdp.transition[s, a], axis=1)
            u = rng.random(n)[:, None]
            s = np.minimum((u >= cum).sum(axis=1), S - 1)
    return total.mean(), total.std(ddof=1) / np.sqrt(n)

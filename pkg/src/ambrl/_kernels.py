"""Compiled episode loops for AMB and the UCB baseline.

Each call advances a learner over a batch of episodes whose uniforms were drawn
up front by ``EpisodeStreams.draw``; arithmetic mirrors ``ambrl.amb`` and
``ambrl.baselines`` operation for operation so both paths produce identical
bound tables.  Per-episode diagnostics are written into caller-owned arrays.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

# layout of the int64 ``flags`` array shared with the harness
SANDWICH = 0        # count of episodes with a bound outside [0, H] or lower > upper
GREW = 1            # count of episodes where an admissible set gained an action
SHRANK = 2          # count of episodes where the decided set lost a state
THAWED = 3          # count of episodes where a decided state's bounds moved
FIRST_INVALID = 4   # first episode with Q*/V* outside the bounds at an undecided state, else -1
FIRST_OPT_LOST = 5  # first episode in which an optimal action was eliminated, else -1
NUM_FLAGS = 6

VALIDITY_TOL = 1e-9


def new_flags() -> np.ndarray:
    f = np.zeros(NUM_FLAGS, dtype=np.int64)
    f[FIRST_INVALID] = -1
    f[FIRST_OPT_LOST] = -1
    return f


@njit(cache=True)
def _sample(cum, probs, lo, hi, u):
    for j in range(lo, hi):
        if u < cum[j]:
            return j
    for j in range(hi - 1, lo - 1, -1):
        if probs[j] > 0:
            return j
    return hi - 1


@njit(cache=True)
def _policy_return(P, R, init, level_off, H, pi, v):
    """Exact ``V^pi_0``; fills ``v`` with per-state values."""
    for h in range(H - 1, -1, -1):
        for s in range(level_off[h], level_off[h + 1]):
            a = pi[s]
            acc = R[s, a]
            if h + 1 < H:
                for y in range(level_off[h + 1], level_off[h + 2]):
                    acc += P[s, a, y] * v[y]
            v[s] = acc
    total = 0.0
    for s in range(level_off[0], level_off[1]):
        total += init[s] * v[s]
    return total


@njit(cache=True)
def _rollout(P, cumP, R, init, cum_init, level_off, H, pi, u0, ut, ur, states, actions, rewards):
    s = _sample(cum_init, init, level_off[0], level_off[1], u0)
    for h in range(H):
        a = pi[s]
        states[h] = s
        actions[h] = a
        rewards[h] = 1 if ur[h] < R[s, a] else 0
        if h + 1 < H:
            s = _sample(cumP[s, a], P[s, a], level_off[h + 1], level_off[h + 2], ut[h])


@njit(cache=True)
def amb_run(P, cumP, R, init, cum_init, nA, level_off, H,
            q_star, v_star, opt_mask, v0_star,
            log_term, bonus_c, tol,
            q_up, q_lo, v_up, v_lo, counts, adm, decided,
            u0, ut, ur, first_episode, check,
            inst_regret, decided_count, eliminated, flags):
    S, A = q_up.shape
    pi = np.zeros(S, dtype=np.int64)
    vpi = np.zeros(S)
    states = np.zeros(H, dtype=np.int64)
    actions = np.zeros(H, dtype=np.int64)
    rewards = np.zeros(H, dtype=np.int64)
    v_up_prev = np.zeros(S + 1)
    v_lo_prev = np.zeros(S + 1)
    dec_prev = np.zeros(S, dtype=np.bool_)
    adm_prev = np.zeros((S, A), dtype=np.bool_)
    q_up_prev = np.zeros((S, A))
    q_lo_prev = np.zeros((S, A))
    total_actions = 0
    for s in range(S):
        total_actions += nA[s]
    c3 = H ** 3 * log_term

    for i in range(u0.shape[0]):
        k = first_episode + i
        for s in range(S):
            best = -1
            width = -np.inf
            for a in range(A):
                if adm[s, a]:
                    w = q_up[s, a] - q_lo[s, a]
                    if best < 0 or (not decided[s] and w > width):
                        best = a
                        width = w
            pi[s] = best
        inst_regret[i] = v0_star - _policy_return(P, R, init, level_off, H, pi, vpi)
        _rollout(P, cumP, R, init, cum_init, level_off, H, pi, u0[i], ut[i], ur[i],
                 states, actions, rewards)

        v_up_prev[:] = v_up
        v_lo_prev[:] = v_lo
        dec_prev[:] = decided
        if check:
            adm_prev[:, :] = adm
            q_up_prev[:, :] = q_up
            q_lo_prev[:, :] = q_lo

        for h in range(H - 1, -1, -1):
            s = states[h]
            if dec_prev[s]:
                continue
            a = actions[h]
            counts[s, a] += 1
            n = counts[s, a]
            hp = H
            sp = S
            for j in range(h + 1, H):
                if not dec_prev[states[j]]:
                    hp = j
                    sp = states[j]
                    break
            ret = 0
            for j in range(h, hp):
                ret += rewards[j]
            b = bonus_c * math.sqrt(c3 / n)
            alpha = (H + 1) / (H + n)
            up = (1 - alpha) * q_up[s, a] + alpha * (float(ret) + v_up_prev[sp] + b)
            lo = (1 - alpha) * q_lo[s, a] + alpha * (float(ret) + v_lo_prev[sp] - b)
            q_up[s, a] = min(float(H), up)
            q_lo[s, a] = max(0.0, lo)
            mu = -np.inf
            ml = -np.inf
            for a2 in range(A):
                if adm[s, a2]:
                    mu = max(mu, q_up[s, a2])
                    ml = max(ml, q_lo[s, a2])
            v_up[s] = mu
            v_lo[s] = ml

        n_dec = 0
        n_adm = 0
        for s in range(S):
            m = 0
            for a in range(A):
                if adm[s, a] and q_up[s, a] < v_lo[s] - tol:
                    adm[s, a] = False
                if adm[s, a]:
                    m += 1
            decided[s] = m == 1
            n_dec += m == 1
            n_adm += m
        decided_count[i] = n_dec
        eliminated[i] = total_actions - n_adm

        if check:
            bad_sandwich = False
            grew = False
            thawed = False
            invalid = False
            lost = False
            for s in range(S):
                if v_lo[s] < 0 or v_lo[s] > v_up[s] or v_up[s] > H:
                    bad_sandwich = True
                if dec_prev[s] and not decided[s]:
                    flags[SHRANK] += 1
                if not decided[s] and (v_lo[s] > v_star[s] + VALIDITY_TOL
                                       or v_up[s] < v_star[s] - VALIDITY_TOL):
                    invalid = True
                for a in range(nA[s]):
                    if q_lo[s, a] < 0 or q_lo[s, a] > q_up[s, a] or q_up[s, a] > H:
                        bad_sandwich = True
                    if adm[s, a] and not adm_prev[s, a]:
                        grew = True
                    if dec_prev[s] and (q_up[s, a] != q_up_prev[s, a] or q_lo[s, a] != q_lo_prev[s, a]):
                        thawed = True
                    if not decided[s] and (q_lo[s, a] > q_star[s, a] + VALIDITY_TOL
                                           or q_up[s, a] < q_star[s, a] - VALIDITY_TOL):
                        invalid = True
                    if opt_mask[s, a] and not adm[s, a]:
                        lost = True
            flags[SANDWICH] += bad_sandwich
            flags[GREW] += grew
            flags[THAWED] += thawed
            if invalid and flags[FIRST_INVALID] < 0:
                flags[FIRST_INVALID] = k
            if lost and flags[FIRST_OPT_LOST] < 0:
                flags[FIRST_OPT_LOST] = k


@njit(cache=True)
def ucb_run(P, cumP, R, init, cum_init, nA, level_off, H,
            q_star, v_star, v0_star, log_term, bonus_c,
            q_up, v_up, counts,
            u0, ut, ur, first_episode, check,
            inst_regret, flags):
    S, A = q_up.shape
    pi = np.zeros(S, dtype=np.int64)
    vpi = np.zeros(S)
    states = np.zeros(H, dtype=np.int64)
    actions = np.zeros(H, dtype=np.int64)
    rewards = np.zeros(H, dtype=np.int64)
    v_prev = np.zeros(S + 1)
    c3 = H ** 3 * log_term

    for i in range(u0.shape[0]):
        k = first_episode + i
        for s in range(S):
            best = 0
            for a in range(1, nA[s]):
                if q_up[s, a] > q_up[s, best]:
                    best = a
            pi[s] = best
        inst_regret[i] = v0_star - _policy_return(P, R, init, level_off, H, pi, vpi)
        _rollout(P, cumP, R, init, cum_init, level_off, H, pi, u0[i], ut[i], ur[i],
                 states, actions, rewards)
        v_prev[:] = v_up
        for h in range(H - 1, -1, -1):
            s = states[h]
            a = actions[h]
            nxt = states[h + 1] if h + 1 < H else S
            counts[s, a] += 1
            n = counts[s, a]
            b = bonus_c * math.sqrt(c3 / n)
            alpha = (H + 1) / (H + n)
            up = (1 - alpha) * q_up[s, a] + alpha * (float(rewards[h]) + v_prev[nxt] + b)
            q_up[s, a] = min(float(H), up)
            m = -np.inf
            for a2 in range(nA[s]):
                m = max(m, q_up[s, a2])
            v_up[s] = min(float(H), m)

        if check:
            bad = False
            invalid = False
            for s in range(S):
                if v_up[s] > H or v_up[s] < 0:
                    bad = True
                if v_up[s] < v_star[s] - VALIDITY_TOL:
                    invalid = True
                for a in range(nA[s]):
                    if q_up[s, a] < 0 or q_up[s, a] > H:
                        bad = True
                    if q_up[s, a] < q_star[s, a] - VALIDITY_TOL:
                        invalid = True
            flags[SANDWICH] += bad
            if invalid and flags[FIRST_INVALID] < 0:
                flags[FIRST_INVALID] = k

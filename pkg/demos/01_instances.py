"""Build the three instance families and look at their gap structure.

    python demos/01_instances.py
"""
import math

import numpy as np

from ambrl import SjInstanceSpec, TreeInstanceSpec, backward_induction, random_layered_mdp
from ambrl import sj_hard_instance, tree_lower_bound_base

# %% The two-level instance: one action at s1 is worse by delta_min; every state below it
# has a large gap of its own.
mdp = sj_hard_instance(SjInstanceSpec(n=6, delta_min=0.1))
sol = backward_induction(mdp)
print("two-level instance, V*_0 =", sol.v0_star)
for s, name in enumerate(mdp.states):
    print(f"  {name}: Q* = {np.round(sol.q_star[s], 3)}  gaps = {np.round(sol.gap[s], 3)}")

# %% Binary tree: only the root-to-x1 path matters, so positive gaps are few.
for n in (4, 8, 16, 32):
    tree = tree_lower_bound_base(TreeInstanceSpec(n, 2, gamma=0.1))
    g = backward_induction(tree).gap
    g = g[np.isfinite(g) & (g > 1e-9)]
    print(f"tree n={n:>2}: {tree.num_states:>2} states, sum 1/gap = {np.sum(1 / g):6.1f}, "
          f"(log2 n + 1)/gamma = {(math.log2(n) + 1) / 0.1:6.1f}")

# %% A random instance with every gap at least 0.15.
rnd = random_layered_mdp([10, 10, 10], 3, seed=0, min_gap=0.15)
rs = backward_induction(rnd)
print(f"random [10,10,10] x 3: gap_min = {rs.gap_min_global:.3f}, unique optimum: {rs.unique_optimal}")

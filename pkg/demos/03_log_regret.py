"""Fit cum_regret(k) ~ a ln k + b and check that late doublings cost less.

    python demos/03_log_regret.py
"""
from ambrl import ExperimentConfig, aggregate, fit_log_regret, log_fit_quality, run_experiment

env = {"kind": "random", "levels": [10, 10, 10], "A": 3, "seed": 0, "min_gap": 0.15}
sm = aggregate(run_experiment(ExperimentConfig(env, "amb", 2**18, bonus_c=0.2, seeds=tuple(range(5)))))

for p in range(12, 19, 2):
    print(f"R(2^{p}) = {sm.mean_at(2**p):9.1f}")
inc = [sm.mean_at(2**(p + 2)) - sm.mean_at(2**p) for p in (12, 14, 16)]
print("regret added per two doublings:", [round(x, 1) for x in inc])

# %% once learning settles, a log fit over the tail is tight
fit = fit_log_regret(sm, start=2**16)
print("tail fit:", log_fit_quality(sm, fit))

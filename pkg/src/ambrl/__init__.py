"""Gap-dependent tabular RL: the AMB learner, an optimistic Q-learning baseline,
exact solvers for layered episodic MDPs, and hard-instance generators."""
from .amb import AmbConfig, AmbState, alpha_weights, bonus, clip, learning_rate
from .baselines import UcbState
from .environments import (SjInstanceSpec, TreeInstanceSpec, kl_bernoulli, random_layered_mdp,
                           sj_hard_instance, tree_lower_bound_base, tree_lower_bound_perturbed)
from .harness import (ExperimentConfig, RegretSeries, RegretSummary, aggregate, compare, export,
                      fit_log_regret, log_fit_quality, regret_of_policy, run_cell, run_experiment)
from .mdp import (TERMINAL, EpisodeStreams, ExactSolution, InvalidMdpError, TabularMdp, Trajectory,
                  backward_induction, policy_value, sample_episode, validate)

__version__ = "0.1.0"

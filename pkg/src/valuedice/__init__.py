"""Tabular off-policy distribution-matching imitation, with exact-occupancy
oracles, minibatch trainers, and behavioral-cloning / adversarial baselines."""

from .baselines import (Discriminator, bc_fit, gail_objective,
                        gail_optimal_discriminator, gail_train,
                        grad_discriminator)
from .divergence import (CLIP_BOUND, EPS_LOG, DualFunction, NuFunction,
                         bellman_operator, dv_objective, dv_optimal_x,
                         initial_nu_expectation, j_dice_exact,
                         kl_as_discounted_return, kl_occupancy,
                         log_expected_exp, x_from_nu)
from .environments import (DEFAULT_REPLAY_CAPACITY, ExpertDataset, ReplayBuffer,
                           build_ring_mdp, generate_demonstrations, random_mdp,
                           replay_push, replay_sample, sparse_expert_dataset,
                           sparse_expert_policy, stochastic_expert_policy,
                           virtual_initial_states)
from .errors import ConfigError, NumericalError
from .harness import (ExperimentConfig, MetricsRow, compare_baselines,
                      export_kl_curve, run_experiment)
from .mdp import (Occupancy, Policy, TabularMdp, Trajectory, Transition,
                  balance_residual, compute_occupancy, load_mdp,
                  occupancy_monte_carlo, occupancy_system, sample_trajectory,
                  save_mdp, softmax_policy, validate_mdp)
from .training import (LOGIT_PENALTY, EmpiricalObjective, MixConfig,
                       SaddleState, TrainingConfig, TrainResult,
                       geometric_time_index, grad_nu_exact, grad_policy_exact,
                       j_dice_empirical, j_dice_mix_exact, train_empirical,
                       train_exact)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

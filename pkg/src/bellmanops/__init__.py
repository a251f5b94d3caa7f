"""Bellman operators, their fixed points, and tabular learners built on them."""

from .dp import PolicyIteration, ValueIteration, policy_evaluation, policy_iteration, value_iteration
from .envs import DiscretizedEnv, GridDiscretizer, GridSpec, MdpEnv, discretize, reset, step
from .fixed_point import FixedPointResult, estimate_contraction_modulus, iterate_to_fixed_point
from .mdp import TabularMdp, random_mdp, two_state_mdp
from .model_free import Backup, LearnerConfig, QLearner, q_learning, sarsa
from .operators import BellmanOperator, BetaSchedule, OperatorKind, make_operator

__version__ = "0.1.0"

__all__ = [
    "Backup",
    "BellmanOperator",
    "BetaSchedule",
    "DiscretizedEnv",
    "FixedPointResult",
    "GridDiscretizer",
    "GridSpec",
    "LearnerConfig",
    "MdpEnv",
    "OperatorKind",
    "PolicyIteration",
    "QLearner",
    "TabularMdp",
    "ValueIteration",
    "discretize",
    "estimate_contraction_modulus",
    "iterate_to_fixed_point",
    "make_operator",
    "policy_evaluation",
    "policy_iteration",
    "q_learning",
    "random_mdp",
    "reset",
    "sarsa",
    "step",
    "two_state_mdp",
    "value_iteration",
]

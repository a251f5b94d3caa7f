"""Bellman-style operators as pure maps on value tables.

Every ``apply_*`` function takes the MDP plus a table and returns a new
table; inputs are never modified. :class:`BellmanOperator` bundles an
operator family with its MDP, policy and beta schedule so it can be handed
to the fixed-point engine.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .fixed_point import DEFAULT_MAX_ITER, DEFAULT_TOL, FixedPointResult, iterate_to_fixed_point
from .mdp import (
    TabularMdp,
    check_action_values,
    check_policy,
    check_state_values,
    greedy_policy,
)


class OperatorKind(str, enum.Enum):
    EXPECTATION_V = "expectation_v"
    EXPECTATION_Q = "expectation_q"
    OPTIMALITY_V = "optimality_v"
    OPTIMALITY_Q = "optimality_q"
    CONSISTENT_Q = "consistent_q"
    ADVANTAGE_Q = "advantage_q"

    @property
    def acts_on_q(self) -> bool:
        return self not in (OperatorKind.EXPECTATION_V, OperatorKind.OPTIMALITY_V)

    @property
    def needs_policy(self) -> bool:
        return self in (OperatorKind.EXPECTATION_V, OperatorKind.EXPECTATION_Q)

    @property
    def is_contraction(self) -> bool:
        return self is not OperatorKind.ADVANTAGE_Q


# Names accepted on the command line and in config files.
OPERATOR_ALIASES = {
    "bellman": OperatorKind.OPTIMALITY_Q,
    "classical": OperatorKind.OPTIMALITY_Q,
    "expectation": OperatorKind.EXPECTATION_Q,
    "consistent": OperatorKind.CONSISTENT_Q,
    "advantage": OperatorKind.ADVANTAGE_Q,
}


def parse_operator_kind(name) -> OperatorKind:
    if isinstance(name, OperatorKind):
        return name
    key = str(name).strip().lower().replace("-", "_")
    if key in OPERATOR_ALIASES:
        return OPERATOR_ALIASES[key]
    try:
        return OperatorKind(key)
    except ValueError:
        raise ValueError(
            f"unknown operator {name!r}; expected one of "
            f"{sorted(OPERATOR_ALIASES) + [k.value for k in OperatorKind]}"
        ) from None


@dataclass(frozen=True)
class BetaSchedule:
    """Coefficient of the advantage term.

    ``BetaSchedule.family(k)`` gives ``beta_j = 1 / j**(k + 1)``, a summable
    sequence tending to zero; ``BetaSchedule.fixed(b)`` is the constant ``b``.
    """

    family_index: int | None = None
    constant: float | None = None

    def __post_init__(self):
        if (self.family_index is None) == (self.constant is None):
            raise ValueError("give exactly one of family_index or constant")
        if self.family_index is not None and self.family_index < 1:
            raise ValueError("family_index must be >= 1")
        if self.constant is not None and not self.constant >= 0:
            raise ValueError("constant beta must be >= 0")

    @classmethod
    def family(cls, k: int) -> "BetaSchedule":
        return cls(family_index=int(k))

    @classmethod
    def fixed(cls, beta: float) -> "BetaSchedule":
        return cls(constant=float(beta))

    @property
    def per_iteration(self) -> bool:
        return self.family_index is not None

    def __str__(self):
        if self.per_iteration:
            return f"beta.family={self.family_index}"
        return f"beta.constant={self.constant!r}"

    @classmethod
    def parse(cls, text: str) -> "BetaSchedule":
        """Parse ``beta.family=k`` / ``beta.constant=x`` (prefix optional)."""
        key, sep, value = text.strip().partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {text!r}")
        key = key.strip().removeprefix("beta.")
        if key == "family":
            return cls.family(int(value))
        if key == "constant":
            return cls.fixed(float(value))
        raise ValueError(f"unknown beta key {key!r}")


def beta_at(schedule: BetaSchedule, j: int) -> float:
    """Beta used at iteration ``j`` (1-based)."""
    if j < 1:
        raise ValueError(f"iteration index must be >= 1, got {j}")
    if schedule.per_iteration:
        return 1.0 / float(j) ** (schedule.family_index + 1)
    return schedule.constant


# -- operator kernels -----------------------------------------------------------


def apply_expectation_v(mdp: TabularMdp, policy, v) -> np.ndarray:
    """``sum_a pi(a|s) (r(s,a) + gamma sum_s' p(s'|s,a) v(s'))``."""
    pi = check_policy(policy, mdp.n_states, mdp.n_actions)
    v = check_state_values(v, mdp)
    return np.sum(pi * (mdp.expected_reward + mdp.discount * (mdp.transition @ v)), axis=1)


def apply_expectation_q(mdp: TabularMdp, policy, q) -> np.ndarray:
    """``r(s,a) + gamma sum_s' p(s'|s,a) sum_a' pi(a'|s') q(s',a')``."""
    pi = check_policy(policy, mdp.n_states, mdp.n_actions)
    q = check_action_values(q, mdp)
    return mdp.expected_reward + mdp.discount * (mdp.transition @ np.sum(pi * q, axis=1))


def apply_optimality_v(mdp: TabularMdp, v) -> np.ndarray:
    v = check_state_values(v, mdp)
    return np.max(mdp.expected_reward + mdp.discount * (mdp.transition @ v), axis=1)


def apply_optimality_q(mdp: TabularMdp, q) -> np.ndarray:
    q = check_action_values(q, mdp)
    return mdp.expected_reward + mdp.discount * (mdp.transition @ np.max(q, axis=1))


def apply_consistent_q(mdp: TabularMdp, q) -> np.ndarray:
    """Optimality backup, except a self-transition backs up ``q(s, a)`` itself.

    ``r(s,a) + gamma sum_s' p(s'|s,a) [1{s'!=s} max_a' q(s',a') + 1{s'=s} q(s,a)]``
    """
    q = check_action_values(q, mdp)
    m = np.max(q, axis=1)
    stay = mdp.self_transition
    backup = mdp.transition @ m - stay * m[:, None] + stay * q
    return mdp.expected_reward + mdp.discount * backup


def advantage_table(q, policy) -> np.ndarray:
    """``q(s,a) - sum_b pi(b|s) q(s,b)``."""
    q = np.asarray(q, dtype=float)
    return q - np.sum(np.asarray(policy, dtype=float) * q, axis=1, keepdims=True)


def apply_advantage_q(mdp: TabularMdp, policy, q, beta_value: float) -> np.ndarray:
    """Expectation backup plus ``beta_value`` times the advantage of ``q``."""
    if not beta_value >= 0:
        raise ValueError(f"beta must be >= 0, got {beta_value}")
    out = apply_expectation_q(mdp, policy, q)
    return out + beta_value * advantage_table(q, policy)


# -- bundled operator -----------------------------------------------------------


@dataclass(frozen=True)
class BellmanOperator:
    """An operator family closed over its MDP.

    ``policy`` is required by the expectation operators. For the advantage
    operator a missing policy means "greedy with respect to the current
    table", which turns the expectation term into a max.
    """

    kind: OperatorKind
    mdp: TabularMdp
    policy: np.ndarray | None = None
    beta: BetaSchedule | None = None

    def __post_init__(self):
        kind = parse_operator_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind.needs_policy and self.policy is None:
            raise ValueError(f"{kind.value} needs a policy")
        if kind is OperatorKind.ADVANTAGE_Q and self.beta is None:
            raise ValueError("advantage_q needs a beta schedule")
        if self.policy is not None:
            pi = np.array(check_policy(self.policy, self.mdp.n_states, self.mdp.n_actions))
            pi.flags.writeable = False
            object.__setattr__(self, "policy", pi)

    @property
    def shape(self) -> tuple[int, ...]:
        if self.kind.acts_on_q:
            return (self.mdp.n_states, self.mdp.n_actions)
        return (self.mdp.n_states,)

    @property
    def greedy(self) -> bool:
        return self.kind is OperatorKind.ADVANTAGE_Q and self.policy is None

    @property
    def depends_on_iteration(self) -> bool:
        return self.kind is OperatorKind.ADVANTAGE_Q and self.beta.per_iteration

    def policy_for(self, table) -> np.ndarray:
        if self.policy is not None:
            return self.policy
        return greedy_policy(table)

    def __call__(self, table, j: int = 1) -> np.ndarray:
        k, mdp = self.kind, self.mdp
        if k is OperatorKind.EXPECTATION_V:
            return apply_expectation_v(mdp, self.policy, table)
        if k is OperatorKind.EXPECTATION_Q:
            return apply_expectation_q(mdp, self.policy, table)
        if k is OperatorKind.OPTIMALITY_V:
            return apply_optimality_v(mdp, table)
        if k is OperatorKind.OPTIMALITY_Q:
            return apply_optimality_q(mdp, table)
        if k is OperatorKind.CONSISTENT_Q:
            return apply_consistent_q(mdp, table)
        return apply_advantage_q(mdp, self.policy_for(table), table, beta_at(self.beta, j))

    def at(self, j: int):
        """The map used at iteration ``j`` as a one-argument callable."""
        return lambda table: self(table, j)

    def solve(
        self, x0=None, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, **kwargs
    ) -> FixedPointResult:
        """Iterate from ``x0`` (zeros by default) with the fixed-point engine."""
        start = np.zeros(self.shape) if x0 is None else x0
        return iterate_to_fixed_point(
            self.__call__, start, tol, max_iter, indexed=True, **kwargs
        )


def make_operator(kind, mdp: TabularMdp, policy=None, beta=None) -> BellmanOperator:
    if isinstance(beta, (int, float)):
        beta = BetaSchedule.fixed(beta)
    return BellmanOperator(parse_operator_kind(kind), mdp, policy, beta)

"""Model-based solvers built on the operator fixed points.

The functional API (``policy_evaluation``, ``value_iteration``, ...) is
mirrored by :class:`ValueIteration` and :class:`PolicyIteration`, which
follow the scikit-learn estimator protocol: ``fit(mdp)`` learns the value
tables, ``predict(states)`` returns greedy actions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .fixed_point import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    FixedPointResult,
    iterate_to_fixed_point,
)
from .mdp import (
    TabularMdp,
    check_mdp,
    check_policy,
    check_state_values,
    greedy_policy,
    uniform_policy,
)
from .operators import apply_expectation_v, apply_optimality_v


class ConvergenceError(RuntimeError):
    pass


@dataclass
class PolicyIterationResult:
    policy: np.ndarray
    state_values: np.ndarray
    action_values: np.ndarray
    sweeps: int
    evaluation_residuals: list[float] = field(default_factory=list)
    policies: list[np.ndarray] = field(default_factory=list, repr=False)


def _evaluate(mdp, policy, tol, max_iter) -> FixedPointResult:
    res = iterate_to_fixed_point(
        lambda v: apply_expectation_v(mdp, policy, v), np.zeros(mdp.n_states), tol, max_iter
    )
    if not res.converged:
        raise ConvergenceError(
            f"policy evaluation did not converge in {max_iter} iterations "
            f"(last residual {res.final_residual:.3e})"
        )
    return res


def policy_evaluation(
    mdp: TabularMdp, policy, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> np.ndarray:
    """Iterate the expectation operator from the zero table to its fixed point."""
    policy = check_policy(policy, mdp.n_states, mdp.n_actions)
    return _evaluate(mdp, policy, tol, max_iter).fixed_point


def policy_evaluation_exact(mdp: TabularMdp, policy) -> np.ndarray:
    """Solve ``(I - gamma P_pi) v = r_pi`` directly."""
    pi = check_policy(policy, mdp.n_states, mdp.n_actions)
    p_pi = np.einsum("sa,sat->st", pi, mdp.transition)
    r_pi = np.sum(pi * mdp.expected_reward, axis=1)
    a = np.eye(mdp.n_states) - mdp.discount * p_pi
    try:
        return np.linalg.solve(a, r_pi)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"singular evaluation system: {exc}") from exc


def q_from_v(mdp: TabularMdp, v) -> np.ndarray:
    """``r(s,a) + gamma sum_s' p(s'|s,a) v(s')``."""
    v = check_state_values(v, mdp)
    return mdp.expected_reward + mdp.discount * (mdp.transition @ v)


def policy_improvement(mdp: TabularMdp, v) -> tuple[np.ndarray, np.ndarray]:
    """Greedy deterministic policy with respect to the one-step lookahead of ``v``."""
    q = q_from_v(mdp, v)
    return greedy_policy(q), q


def _is_greedy(policy, q, tie_tol) -> bool:
    # every action carrying probability mass must be (near-)maximal
    near_max = q >= np.max(q, axis=1, keepdims=True) - tie_tol
    return bool(np.all(near_max | (policy == 0.0)))


def policy_iteration(
    mdp: TabularMdp,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    max_sweeps: int = 1000,
) -> PolicyIterationResult:
    """Alternate evaluation and greedy improvement, starting from the uniform policy.

    Stops as soon as the evaluated policy is already greedy with respect to
    its own action values, i.e. improvement cannot change it.
    """
    check_mdp(mdp)
    policy = uniform_policy(mdp.n_states, mdp.n_actions)
    residuals, policies = [], []
    tie_tol = 10.0 * tol
    for sweep in range(1, max_sweeps + 1):
        res = _evaluate(mdp, policy, tol, max_iter)
        residuals.append(res.final_residual)
        improved, q = policy_improvement(mdp, res.fixed_point)
        policies.append(improved)
        if _is_greedy(policy, q, tie_tol):
            return PolicyIterationResult(
                improved, res.fixed_point, q, sweep, residuals, policies
            )
        policy = improved
    raise ConvergenceError(f"policy iteration did not stabilise in {max_sweeps} sweeps")


def value_iteration(
    mdp: TabularMdp,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    record_iterates: bool = False,
    return_result: bool = False,
):
    """Iterate the optimality operator from zero, then extract a greedy policy.

    Returns ``(values, policy)``, plus the raw :class:`FixedPointResult`
    when ``return_result`` is set.
    """
    check_mdp(mdp)
    res = iterate_to_fixed_point(
        lambda v: apply_optimality_v(mdp, v),
        np.zeros(mdp.n_states),
        tol,
        max_iter,
        record_iterates=record_iterates,
    )
    if not res.converged:
        raise ConvergenceError(f"value iteration did not converge in {max_iter} iterations")
    policy, _ = policy_improvement(mdp, res.fixed_point)
    if return_result:
        return res.fixed_point, policy, res
    return res.fixed_point, policy


# -- estimators -----------------------------------------------------------------


class _PlannerMixin:
    def predict(self, states=None):
        """Greedy action for each state index (all states when omitted)."""
        check_is_fitted(self, "policy_")
        actions = np.argmax(self.policy_, axis=1)
        if states is None:
            return actions
        states = np.asarray(states, dtype=int)
        if np.any(states < 0) or np.any(states >= len(actions)):
            raise IndexError("state index out of range")
        return actions[states]

    def score(self, mdp: TabularMdp, y=None) -> float:
        """Mean exact value of the fitted policy on ``mdp``."""
        check_is_fitted(self, "policy_")
        return float(np.mean(policy_evaluation_exact(mdp, self.policy_)))


class ValueIteration(_PlannerMixin, BaseEstimator):
    """Value iteration as an estimator.

    Parameters
    ----------
    tol : float
        Stopping threshold on successive sup-norm residuals.
    max_iter : int
        Cap on operator applications.

    Attributes
    ----------
    values_ : ndarray of shape (n_states,)
    q_values_ : ndarray of shape (n_states, n_actions)
    policy_ : ndarray of shape (n_states, n_actions)
    n_iter_ : int
    residuals_ : list of float
    """

    def __init__(self, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, mdp: TabularMdp, y=None):
        v, policy, res = value_iteration(mdp, self.tol, self.max_iter, return_result=True)
        self.values_ = v
        self.policy_ = policy
        self.q_values_ = q_from_v(mdp, v)
        self.n_iter_ = res.iterations
        self.residuals_ = res.residual_history
        return self


class PolicyIteration(_PlannerMixin, BaseEstimator):
    """Policy iteration as an estimator; attributes mirror :class:`ValueIteration`."""

    def __init__(
        self, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, max_sweeps: int = 1000
    ):
        self.tol = tol
        self.max_iter = max_iter
        self.max_sweeps = max_sweeps

    def fit(self, mdp: TabularMdp, y=None):
        res = policy_iteration(mdp, self.tol, self.max_iter, self.max_sweeps)
        self.values_ = res.state_values
        self.policy_ = res.policy
        self.q_values_ = res.action_values
        self.n_iter_ = res.sweeps
        self.residuals_ = res.evaluation_residuals
        return self

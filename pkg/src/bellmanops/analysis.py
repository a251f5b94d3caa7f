"""Empirical checks of operator properties on small MDPs.

Each check returns a report object that records whether the property is a
proven result for that operator (``claim == "theorem"``) or an assertion
being tested empirically (``claim == "claim under test"``). Only the former
should ever be asserted at 100% in a test suite.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .fixed_point import FixedPointResult, estimate_contraction_modulus
from .mdp import TabularMdp, random_mdp, random_policy
from .operators import BellmanOperator, BetaSchedule, OperatorKind, make_operator, parse_operator_kind

MARGIN = 1e-9
REFERENCE_ITERATIONS = 100000
THEOREM = "theorem"
UNDER_TEST = "claim under test"

CONTRACTIVE = (
    OperatorKind.EXPECTATION_V,
    OperatorKind.EXPECTATION_Q,
    OperatorKind.OPTIMALITY_V,
    OperatorKind.OPTIMALITY_Q,
    OperatorKind.CONSISTENT_Q,
)


def _claim_for_contraction(kind: OperatorKind) -> str:
    return THEOREM if kind in CONTRACTIVE else UNDER_TEST


def _claim_for_preservation(kind: OperatorKind) -> str:
    return THEOREM if kind in (OperatorKind.OPTIMALITY_Q, OperatorKind.CONSISTENT_Q) else UNDER_TEST


def build_operator(kind, mdp: TabularMdp, policy=None, beta=None, seed: int = 0) -> BellmanOperator:
    """Operator for a property check, filling in what the family needs.

    Expectation operators without a policy get a seeded random policy; the
    advantage operator without a beta gets the family ``k = 1`` schedule.
    """
    kind = parse_operator_kind(kind)
    if kind.needs_policy and policy is None:
        policy = random_policy(mdp.n_states, mdp.n_actions, seed)
    if kind is OperatorKind.ADVANTAGE_Q and beta is None:
        beta = BetaSchedule.family(1)
    return make_operator(kind, mdp, policy, beta)


# -- contraction and monotonicity ---------------------------------------------------


@dataclass
class ContractionCheck:
    operator: OperatorKind
    discount: float
    estimated_modulus: float
    trials: int
    violation: bool
    witness: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)
    claim: str = THEOREM


def check_contraction(
    operator,
    mdp: TabularMdp,
    trials: int = 1000,
    seed: int = 0,
    policy=None,
    beta=None,
) -> ContractionCheck:
    """Estimate the sup-norm modulus and flag it if it exceeds ``discount + 1e-9``.

    Iteration-dependent operators are checked at ``j = 1``.
    """
    if trials < 100:
        raise ValueError("use at least 100 trials")
    op = operator if isinstance(operator, BellmanOperator) else build_operator(operator, mdp, policy, beta, seed)
    rep = estimate_contraction_modulus(op.at(1), op.shape, trials, seed)
    violation = rep.estimated_modulus > mdp.discount + MARGIN
    return ContractionCheck(
        op.kind,
        mdp.discount,
        rep.estimated_modulus,
        trials,
        violation,
        rep.worst_pair if violation else None,
        _claim_for_contraction(op.kind),
    )


def find_contraction_violation(
    operator, seeds, n_states: int = 5, n_actions: int = 3, discount: float = 0.9, trials: int = 200, beta=None
) -> tuple[int, ContractionCheck] | None:
    """First ``(seed, check)`` among ``seeds`` whose random MDP exhibits a violation."""
    for seed in seeds:
        mdp = random_mdp(n_states, n_actions, discount, seed)
        chk = check_contraction(operator, mdp, trials, seed, beta=beta)
        if chk.violation:
            return seed, chk
    return None


@dataclass
class MonotonicityCheck:
    operator: OperatorKind
    trials: int
    violations: int
    worst_excess: float
    claim: str = THEOREM


def check_monotonicity(
    operator, mdp: TabularMdp, trials: int = 1000, seed: int = 0, policy=None, beta=None
) -> MonotonicityCheck:
    """Draw ``u`` and ``v = u + |noise|``; count pairs where ``T u > T v`` anywhere.

    A comparison counts as a violation only beyond a ``1e-9`` rounding margin.
    """
    op = operator if isinstance(operator, BellmanOperator) else build_operator(operator, mdp, policy, beta, seed)
    rng = np.random.default_rng(seed)
    violations, worst = 0, 0.0
    for _ in range(trials):
        u = rng.uniform(-10.0, 10.0, size=op.shape)
        v = u + np.abs(rng.uniform(0.0, 5.0, size=op.shape))
        excess = float(np.max(op(u) - op(v)))
        if excess > MARGIN:
            violations += 1
        worst = max(worst, excess)
    return MonotonicityCheck(op.kind, trials, violations, worst, _claim_for_contraction(op.kind))


# -- fixed-point comparisons -----------------------------------------------------------


def _solve(op: BellmanOperator, tol: float, max_iter: int) -> FixedPointResult:
    return op.solve(tol=tol, max_iter=max_iter)


def _values(op: BellmanOperator, q: np.ndarray, value_mode: str) -> np.ndarray:
    if value_mode == "max":
        return np.max(q, axis=1)
    if value_mode == "average":
        return np.sum(op.policy_for(q) * q, axis=1)
    raise ValueError(f"value_mode must be 'max' or 'average', got {value_mode!r}")


def _default_mode(op: BellmanOperator) -> str:
    # optimality-style operators compare against the max, expectation-style against the policy average
    if op.kind in (OperatorKind.EXPECTATION_Q,) or (op.kind is OperatorKind.ADVANTAGE_Q and not op.greedy):
        return "average"
    return "max"


@dataclass
class PreservationCheck:
    """Per-pair verdicts for optimality preservation.

    ``checked[s, a]`` marks the classically suboptimal pairs; ``kept[s, a]``
    whether each stayed suboptimal under the alternative operator.
    """

    operator: OperatorKind
    verdict: str
    value_mode: str
    checked: np.ndarray
    kept: np.ndarray
    classical_q: np.ndarray
    alternative_q: np.ndarray
    alternative_residual: float
    claim: str

    @property
    def violations(self) -> list[tuple[int, int]]:
        return [tuple(map(int, ix)) for ix in np.argwhere(self.checked & ~self.kept)]


@dataclass
class GapCheck:
    operator: OperatorKind
    verdict: str
    value_mode: str
    classical_gap: np.ndarray
    alternative_gap: np.ndarray
    alternative_residual: float
    claim: str

    @property
    def violations(self) -> list[tuple[int, int]]:
        bad = self.classical_gap > self.alternative_gap + MARGIN
        return [tuple(map(int, ix)) for ix in np.argwhere(bad)]


def _pair(mdp, alt_operator, iterations, tol, policy, beta):
    classical = make_operator(OperatorKind.OPTIMALITY_Q, mdp)
    alt = (
        alt_operator
        if isinstance(alt_operator, BellmanOperator)
        else build_operator(alt_operator, mdp, policy, beta)
    )
    if not alt.kind.acts_on_q:
        raise ValueError("the alternative operator must act on action values")
    # the classical reference always gets the full budget
    base = _solve(classical, tol, max(iterations, REFERENCE_ITERATIONS))
    if not base.converged:
        raise RuntimeError("classical operator failed to converge")
    return classical, alt, base, _solve(alt, tol, iterations)


def check_optimality_preservation(
    mdp: TabularMdp,
    alt_operator,
    iterations: int = 100000,
    tol: float = 1e-10,
    value_mode: str | None = None,
    policy=None,
    beta=None,
) -> PreservationCheck:
    """Do classically suboptimal actions stay suboptimal at the alternative fixed point?

    A pair is checked when ``Q*(s,a) < V*(s) - 1e-9``. In ``"max"`` mode it
    is kept when ``Q~(s,a) < max_b Q~(s,b) - 1e-9``, i.e. it stays out of the
    argmax set; in ``"average"`` mode when ``Q~(s,a) < V~(s) + 1e-9`` with
    ``V~`` the policy average. Non-convergence yields ``"inconclusive"``.
    """
    _, alt, base, res = _pair(mdp, alt_operator, iterations, tol, policy, beta)
    mode = value_mode or _default_mode(alt)
    q_star = base.fixed_point
    checked = q_star < np.max(q_star, axis=1, keepdims=True) - MARGIN
    claim = _claim_for_preservation(alt.kind)
    if not res.converged:
        empty = np.zeros_like(checked)
        return PreservationCheck(alt.kind, "inconclusive", mode, checked, empty, q_star, res.fixed_point, res.final_residual, claim)
    q_alt = res.fixed_point
    v_alt = _values(alt, q_alt, mode)[:, None]
    kept = q_alt < v_alt - MARGIN if mode == "max" else q_alt < v_alt + MARGIN
    verdict = "violated" if np.any(checked & ~kept) else "preserved"
    return PreservationCheck(alt.kind, verdict, mode, checked, kept, q_star, q_alt, res.final_residual, claim)


def check_gap_increasing(
    mdp: TabularMdp,
    alt_operator,
    iterations: int = 100000,
    tol: float = 1e-10,
    value_mode: str | None = None,
    policy=None,
    beta=None,
) -> GapCheck:
    """Compare ``|Q*(s,a) - V*(s)|`` with ``|Q~(s,a) - V~(s)|`` pair by pair."""
    _, alt, base, res = _pair(mdp, alt_operator, iterations, tol, policy, beta)
    mode = value_mode or _default_mode(alt)
    q_star = base.fixed_point
    gap_star = np.abs(q_star - np.max(q_star, axis=1, keepdims=True))
    claim = _claim_for_preservation(alt.kind)
    if not res.converged:
        return GapCheck(alt.kind, "inconclusive", mode, gap_star, np.full_like(gap_star, np.nan), res.final_residual, claim)
    q_alt = res.fixed_point
    gap_alt = np.abs(q_alt - _values(alt, q_alt, mode)[:, None])
    verdict = "violated" if np.any(gap_star > gap_alt + MARGIN) else "preserved"
    return GapCheck(alt.kind, verdict, mode, gap_star, gap_alt, res.final_residual, claim)


@dataclass
class OperatorComparisonReport:
    mdp_id: str
    classical_q: np.ndarray
    classical_v: np.ndarray
    tables: dict[str, np.ndarray]
    values: dict[str, np.ndarray]
    value_modes: dict[str, str]
    argmax_agreement: dict[str, np.ndarray]
    gap_tables: dict[str, np.ndarray]
    converged: dict[str, bool]
    iterations: dict[str, int]

    @property
    def classical_gap(self) -> np.ndarray:
        return np.abs(self.classical_q - self.classical_v[:, None])

    def agreement_rate(self, name: str) -> float:
        return float(np.mean(self.argmax_agreement[name]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mdp", "operator", "state", "action", "q", "v", "gap", "classical_gap", "argmax_agrees"])
        gap_star = self.classical_gap
        for name, q in self.tables.items():
            for s in range(q.shape[0]):
                for a in range(q.shape[1]):
                    w.writerow([
                        self.mdp_id, name, s, a,
                        repr(float(q[s, a])), repr(float(self.values[name][s])),
                        repr(float(self.gap_tables[name][s, a])), repr(float(gap_star[s, a])),
                        int(self.argmax_agreement[name][s]),
                    ])
        return buf.getvalue()


def _argmax_set(q: np.ndarray, tol: float) -> np.ndarray:
    return q >= np.max(q, axis=1, keepdims=True) - tol


def fixed_point_cross_report(
    mdp: TabularMdp,
    operators,
    mdp_id: str = "mdp",
    iterations: int = 100000,
    tol: float = 1e-10,
    tie_tol: float = 1e-7,
) -> OperatorComparisonReport:
    """Fixed points of several Q-operators side by side with the classical one.

    ``argmax_agreement[name][s]`` is true when the operator's near-argmax
    set at ``s`` equals the classical one (ties within ``tie_tol``).
    """
    base = _solve(make_operator(OperatorKind.OPTIMALITY_Q, mdp), tol, iterations)
    q_star = base.fixed_point
    v_star = np.max(q_star, axis=1)
    star_set = _argmax_set(q_star, tie_tol)
    tables, values, modes, agree, gaps, conv, iters = {}, {}, {}, {}, {}, {}, {}
    for spec in operators:
        op = spec if isinstance(spec, BellmanOperator) else build_operator(spec, mdp)
        name = spec if isinstance(spec, str) else op.kind.value
        res = _solve(op, tol, iterations)
        q = res.fixed_point
        mode = _default_mode(op)
        v = _values(op, q, mode)
        tables[name], values[name], modes[name] = q, v, mode
        agree[name] = np.all(_argmax_set(q, tie_tol) == star_set, axis=1)
        gaps[name] = np.abs(q - v[:, None])
        conv[name], iters[name] = res.converged, res.iterations
    return OperatorComparisonReport(mdp_id, q_star, v_star, tables, values, modes, agree, gaps, conv, iters)

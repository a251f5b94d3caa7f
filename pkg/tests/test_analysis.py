import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from bellmanops.analysis import (
    THEOREM,
    UNDER_TEST,
    build_operator,
    check_contraction,
    check_gap_increasing,
    check_monotonicity,
    check_optimality_preservation,
    find_contraction_violation,
    fixed_point_cross_report,
)
from bellmanops.mdp import random_mdp
from bellmanops.operators import BetaSchedule, OperatorKind


def sup(x):
    return float(np.max(np.abs(x)))


class TestContraction:
    @pytest.mark.parametrize("kind", ["optimality_q", "consistent_q", "expectation_q", "optimality_v", "expectation_v"])
    def test_contractive_operators_pass(self, kind):
        mdp = random_mdp(6, 3, 0.8, 2)
        chk = check_contraction(kind, mdp, trials=300)
        assert not chk.violation and chk.claim == THEOREM
        assert 0.0 < chk.estimated_modulus <= 0.8 + 1e-9

    def test_modulus_lower_bounded_by_oracle_pair(self):
        # the estimate is a max over pairs, so it dominates any single pair's ratio
        mdp = random_mdp(5, 3, 0.9, 1)
        rng = np.random.default_rng(5)
        u, v = rng.uniform(-10, 10, (5, 3)), rng.uniform(-10, 10, (5, 3))
        ratio = sup(oracles.optimality_q(mdp, u) - oracles.optimality_q(mdp, v)) / sup(u - v)
        chk = check_contraction("optimality_q", mdp, trials=2000, seed=5)
        assert ratio <= 0.9 + 1e-12
        assert chk.estimated_modulus >= 0.5 * ratio

    def test_advantage_violation_has_witness(self):
        found = find_contraction_violation("advantage_q", range(5), beta=BetaSchedule.fixed(1.0))
        assert found is not None
        seed, chk = found
        assert chk.violation and chk.claim == UNDER_TEST
        u, v = chk.witness
        mdp = random_mdp(5, 3, 0.9, seed)
        op = build_operator("advantage_q", mdp, beta=BetaSchedule.fixed(1.0))
        assert sup(op(u) - op(v)) > 0.9 * sup(u - v)

    def test_advantage_half_beta_also_expands(self):
        found = find_contraction_violation("advantage_q", range(20), beta=BetaSchedule.fixed(0.5))
        assert found is not None and found[1].estimated_modulus > found[1].discount

    def test_too_few_trials(self, two_state):
        with pytest.raises(ValueError):
            check_contraction("optimality_q", two_state, trials=10)


class TestMonotonicity:
    @pytest.mark.parametrize("kind", ["optimality_q", "consistent_q", "expectation_q", "optimality_v"])
    def test_monotone_operators(self, kind):
        chk = check_monotonicity(kind, random_mdp(5, 3, 0.9, 0), trials=300)
        assert chk.violations == 0 and chk.worst_excess <= 1e-9

    def test_reports_advantage_as_claim_under_test(self):
        chk = check_monotonicity("advantage_q", random_mdp(5, 3, 0.9, 0), trials=100, beta=BetaSchedule.fixed(1.0))
        assert chk.claim == UNDER_TEST and chk.trials == 100


class TestPreservation:
    def test_consistent_on_two_state(self, two_state):
        chk = check_optimality_preservation(two_state, "consistent_q")
        assert chk.verdict == "preserved"
        np.testing.assert_allclose(chk.alternative_q, [[0.0, 1.0], [0.0, 0.0]], atol=1e-9)
        assert chk.checked.tolist() == [[True, False], [False, False]]
        assert chk.violations == []

    def test_gap_grows_on_two_state(self, two_state):
        chk = check_gap_increasing(two_state, "consistent_q")
        assert chk.verdict == "preserved"
        assert chk.classical_gap[0, 0] == pytest.approx(0.5)
        assert chk.alternative_gap[0, 0] == pytest.approx(1.0)

    def test_classical_against_itself(self, small_mdps):
        for m in small_mdps:
            chk = check_optimality_preservation(m, "optimality_q")
            assert chk.verdict == "preserved" and chk.claim == THEOREM
            np.testing.assert_allclose(chk.alternative_q, chk.classical_q, atol=1e-12)

    @settings(max_examples=15)
    @given(st.integers(0, 10_000))
    def test_consistent_preserves_and_widens_gaps(self, seed):
        m = random_mdp(4, 3, 0.9, seed)
        assert check_optimality_preservation(m, "consistent_q").verdict == "preserved"
        assert check_gap_increasing(m, "consistent_q").verdict == "preserved"

    def test_consistent_fixed_point_matches_oracle(self):
        m = random_mdp(4, 2, 0.9, 3)
        q = np.zeros((4, 2))
        for _ in range(600):
            q = oracles.consistent_q(m, q)
        chk = check_optimality_preservation(m, "consistent_q")
        np.testing.assert_allclose(chk.alternative_q, q, atol=1e-8)

    def test_value_modes(self, two_state, uniform2):
        chk = check_optimality_preservation(two_state, "expectation_q", policy=uniform2)
        assert chk.value_mode == "average"
        assert check_optimality_preservation(two_state, "advantage_q").value_mode == "max"
        with pytest.raises(ValueError):
            check_optimality_preservation(two_state, "consistent_q", value_mode="median")

    def test_rejects_state_value_operator(self, two_state):
        with pytest.raises(ValueError):
            check_optimality_preservation(two_state, "optimality_v")

    def test_non_convergence_is_inconclusive(self):
        m = random_mdp(4, 2, 0.99, 0)
        chk = check_optimality_preservation(m, "consistent_q", iterations=3)
        assert chk.verdict == "inconclusive"
        assert check_gap_increasing(m, "consistent_q", iterations=3).verdict == "inconclusive"


class TestCrossReport:
    def test_two_state_report(self, two_state):
        rep = fixed_point_cross_report(two_state, ["optimality_q", "consistent_q"], mdp_id="two")
        assert rep.agreement_rate("optimality_q") == 1.0
        assert rep.agreement_rate("consistent_q") == 1.0
        np.testing.assert_allclose(rep.classical_v, [1.0, 0.0], atol=1e-9)
        assert rep.value_modes == {"optimality_q": "max", "consistent_q": "max"}
        assert all(rep.converged.values())

    def test_csv_shape(self, two_state):
        text = fixed_point_cross_report(two_state, ["consistent"], mdp_id="two").to_csv()
        lines = text.splitlines()
        assert lines[0] == "mdp,operator,state,action,q,v,gap,classical_gap,argmax_agrees"
        assert len(lines) == 1 + 4
        assert lines[1].startswith("two,consistent,0,0,")

    def test_advantage_family_agrees_on_random_mdps(self):
        for seed in range(10):
            rep = fixed_point_cross_report(random_mdp(5, 3, 0.9, seed), ["advantage_q"])
            assert rep.agreement_rate("advantage_q") == 1.0

    def test_build_operator_fills_defaults(self, two_state):
        op = build_operator("advantage", two_state)
        assert op.kind is OperatorKind.ADVANTAGE_Q and op.beta == BetaSchedule.family(1)
        assert build_operator("expectation_v", two_state, seed=3).policy.shape == (2, 2)

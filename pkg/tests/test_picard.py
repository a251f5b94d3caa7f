import numpy as np
import pytest

from bellmanops.picard import (
    GridFunction,
    PicardProblem,
    example_problem,
    example_rhs,
    example_solution,
    lipschitz_estimate,
    picard_step,
    picard_table,
    solve_ivp_picard,
)


def rk4_reference(rhs, x0, y0, xs):
    """Classical Runge-Kutta on the grid ``xs``; an independent check on the closed form."""
    ys = [y0]
    for a, b in zip(xs[:-1], xs[1:]):
        h, y = b - a, ys[-1]
        k1 = rhs(a, y)
        k2 = rhs(a + h / 2, y + h * k1 / 2)
        k3 = rhs(a + h / 2, y + h * k2 / 2)
        k4 = rhs(b, y + h * k3)
        ys.append(y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6)
    return np.array(ys)


class TestStep:
    def test_zero_rhs_gives_constant(self):
        prob = PicardProblem(lambda x, y: 0.0 * x, 0.0, 3.0, (0.0, 1.0), 11)
        g = picard_step(prob, GridFunction(prob.grid, np.sin(prob.grid)))
        assert np.all(g.values == 3.0)

    def test_unit_rhs_is_exact(self):
        prob = PicardProblem(lambda x, y: np.ones_like(x), 0.0, 0.0, (0.0, 2.0), 21)
        g = picard_step(prob, prob.constant(5.0))
        np.testing.assert_allclose(g.values, prob.grid, atol=1e-14)

    def test_example_from_zero(self):
        prob = example_problem()
        g = picard_step(prob, prob.constant())
        assert np.max(np.abs(g.values + prob.grid**2 / 2)) < 1e-6

    def test_signed_left_of_origin(self):
        prob = PicardProblem(lambda x, y: np.ones_like(x), 0.0, 1.0, (-1.0, 1.0), 21)
        g = picard_step(prob, prob.constant())
        np.testing.assert_allclose(g.values, 1.0 + prob.grid, atol=1e-14)

    def test_non_finite_names_point(self):
        prob = PicardProblem(lambda x, y: 1.0 / (x - 0.5), 0.0, 0.0, (0.0, 1.0), 11)
        with pytest.raises(FloatingPointError, match="x=0.5"):
            with np.errstate(divide="ignore"):
                picard_step(prob, prob.constant())

    def test_wrong_grid(self):
        prob = example_problem(grid_n=11)
        with pytest.raises(ValueError):
            picard_step(prob, GridFunction(np.linspace(0, 1, 11), np.zeros(11)))


class TestProblemValidation:
    @pytest.mark.parametrize(
        "x0,interval,n", [(2.0, (0.0, 1.0), 11), (0.0, (1.0, 1.0), 11), (0.0, (0.0, 1.0), 1), (0.05, (0.0, 1.0), 11)]
    )
    def test_rejects(self, x0, interval, n):
        with pytest.raises(ValueError):
            PicardProblem(example_rhs, x0, 0.0, interval, n)

    def test_grid_function_invariants(self):
        with pytest.raises(ValueError):
            GridFunction([0.0, 0.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            GridFunction([0.0, 1.0], [1.0, np.nan])


class TestSolve:
    def test_zero_rhs(self):
        prob = PicardProblem(lambda x, y: 0.0 * x, 0.0, 2.0, (0.0, 1.0), 11)
        res = solve_ivp_picard(prob, 3)
        assert np.all(res.solution.values == 2.0)
        assert res.residual_history == [0.0, 0.0, 0.0]

    def test_example_converges(self):
        res = solve_ivp_picard(example_problem(), 30)
        err = np.max(np.abs(res.solution.values - example_solution(res.solution.grid)))
        assert err < 1e-3

    def test_closed_form_agrees_with_rk4(self):
        xs = np.linspace(0.0, 4.0, 401)
        ref = rk4_reference(lambda t, x: x / 2 - t, 0.0, 0.0, xs)
        assert np.max(np.abs(ref - example_solution(xs))) < 1e-8

    def test_five_iterations_already_close(self):
        prob = example_problem()
        errs = []
        for n in (1, 5):
            sol = solve_ivp_picard(prob, n).solution
            errs.append(np.max(np.abs(sol.values - example_solution(sol.grid))))
        assert errs[1] < 1.0
        assert errs[1] * 10 <= errs[0]

    def test_residuals_non_increasing(self):
        h = solve_ivp_picard(example_problem(), 30).residual_history
        assert all(b <= a for a, b in zip(h[2:], h[3:]))

    def test_geometric_rate_on_short_interval(self):
        # half-width 1 and L = 1/2 give k = 0.5 < 1
        prob = PicardProblem(example_rhs, 0.0, 0.0, (0.0, 1.0), 1001)
        h = solve_ivp_picard(prob, 12).residual_history
        k = 1.0 * lipschitz_estimate(example_rhs, prob.grid, [-2.0, 2.0])
        assert k == pytest.approx(0.5)
        assert all(b <= (k + 0.05) * a for a, b in zip(h, h[1:]) if a > 1e-13)

    def test_trapezoid_order(self):
        errs = []
        for n in (101, 201, 401):
            sol = solve_ivp_picard(example_problem(grid_n=n), 60).solution
            errs.append(np.max(np.abs(sol.values - example_solution(sol.grid))))
        for coarse, fine in zip(errs, errs[1:]):
            assert 3.5 <= coarse / fine <= 4.5

    def test_random_start_reaches_same_limit(self):
        prob = example_problem(grid_n=401)
        start = GridFunction(prob.grid, np.random.default_rng(0).uniform(-5, 5, 401))
        a = solve_ivp_picard(prob, 60).solution
        b = solve_ivp_picard(prob, 60, initial=start).solution
        assert a.sup_distance(b) < 1e-9

    def test_iterations_validated(self):
        with pytest.raises(ValueError):
            solve_ivp_picard(example_problem(grid_n=11), 0)

    def test_keep_iterates(self):
        res = solve_ivp_picard(example_problem(grid_n=11), 4, keep_iterates=True)
        assert len(res.iterates) == 5
        assert np.all(res.iterates[0].values == 0.0)


def test_table_rows():
    res = solve_ivp_picard(example_problem(grid_n=5), 30)
    rows = picard_table(res)
    assert len(rows) == 5
    x, y, ref, err = rows[-1]
    assert x == 4.0 and err == pytest.approx(abs(y - ref))

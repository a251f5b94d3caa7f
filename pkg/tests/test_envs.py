import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bellmanops.envs import (
    ACROBOT,
    CART_POLE,
    ENVIRONMENTS,
    DiscretizedEnv,
    GridDiscretizer,
    GridSpec,
    MdpEnv,
    default_grid,
    discretize,
    get_env,
    parse_grid,
    reset,
    step,
)

ENV_NAMES = sorted(ENVIRONMENTS)


class TestReset:
    @pytest.mark.parametrize("name", ENV_NAMES)
    def test_deterministic(self, name):
        assert reset(name, 0) == reset(name, 0)
        assert reset(name, 0) != reset(name, 1)

    @given(st.integers(0, 2**32 - 1))
    def test_cart_pole_small_start(self, seed):
        assert all(-0.05 <= x <= 0.05 for x in reset("cart-pole", seed))

    @given(st.integers(0, 2**32 - 1))
    def test_acrobot_start_in_bounds(self, seed):
        obs = reset("acrobot", seed)
        assert len(obs) == 6 and all(math.isfinite(x) for x in obs)
        for x, (lo, hi) in zip(obs, get_env("acrobot").bounds):
            assert lo <= x <= hi

    @given(st.integers(0, 2**32 - 1))
    def test_mountain_car_start(self, seed):
        pos, vel = reset("mountain-car", seed)
        assert -0.6 <= pos <= -0.4 and vel == 0.0

    def test_unknown_env(self):
        with pytest.raises(ValueError, match="unknown environment"):
            reset("pendulum", 0)


class TestStep:
    def test_mountain_car_idle_in_valley(self):
        out = step("mountain-car", (-0.5, 0.0), 1)
        assert out.reward == -1.0 and not out.terminal and not out.truncated

    def test_mountain_car_goal_is_terminal(self):
        out = step("mountain-car", (0.49, 0.05), 2)
        assert out.next_observation[0] >= 0.5 and out.terminal

    def test_cart_pole_first_step(self):
        out = step("cart-pole", reset("cart-pole", 3), 0)
        assert out.reward == 1.0 and not out.terminal

    def test_cart_pole_fails_past_angle(self):
        out = step("cart-pole", (0.0, 0.0, CART_POLE["theta_threshold"], 2.0), 1)
        assert out.terminal

    @pytest.mark.parametrize("name,bad", [("mountain-car", 3), ("cart-pole", 2), ("acrobot", -1)])
    def test_invalid_action(self, name, bad):
        with pytest.raises(ValueError, match="invalid"):
            step(name, reset(name, 0), bad)

    def test_wrong_dimension(self):
        with pytest.raises(ValueError):
            step("cart-pole", (0.0, 0.0), 0)

    def test_truncated_at_cap(self):
        out = step("mountain-car", (-0.5, 0.0), 1, elapsed=199)
        assert out.truncated and not out.terminal

    @pytest.mark.parametrize("name", ENV_NAMES)
    def test_same_actions_same_trajectory(self, name):
        def roll():
            obs, rng, traj = reset(name, 5), np.random.default_rng(9), []
            for _ in range(50):
                obs = step(name, obs, int(rng.integers(get_env(name).n_actions))).next_observation
                traj.append(obs)
            return traj

        assert roll() == roll()

    @pytest.mark.parametrize("name", ["mountain-car", "acrobot"])
    def test_bounds_and_reward_signs(self, name):
        env, rng = get_env(name), np.random.default_rng(1)
        obs = reset(name, 1)
        for _ in range(500):
            out = step(name, obs, int(rng.integers(env.n_actions)))
            assert out.reward in (-1.0, 0.0)
            for x, (lo, hi) in zip(out.next_observation, env.bounds):
                assert lo - 1e-12 <= x <= hi + 1e-12
            if out.terminal:
                break
            obs = out.next_observation

    def test_acrobot_velocity_clamped(self):
        obs = (1.0, 0.0, 1.0, 0.0, 100.0, -100.0)
        out = step("acrobot", obs, 0)
        assert abs(out.next_observation[4]) <= ACROBOT["max_vel_1"]
        assert abs(out.next_observation[5]) <= ACROBOT["max_vel_2"]


GYM_IDS = {"mountain-car": "MountainCar-v0", "cart-pole": "CartPole-v1", "acrobot": "Acrobot-v1"}


@pytest.mark.parametrize("name", ENV_NAMES)
def test_dynamics_match_reference_toolkit(name):
    gym = pytest.importorskip("gymnasium")
    ref = gym.make(GYM_IDS[name]).unwrapped
    obs, _ = ref.reset(seed=11)
    rng = np.random.default_rng(0)
    ours = tuple(float(x) for x in obs)
    for _ in range(300):
        a = int(rng.integers(ref.action_space.n))
        ref_obs, ref_r, ref_term, _, _ = ref.step(a)
        out = step(name, ours, a)
        # the reference stores float32 observations
        np.testing.assert_allclose(out.next_observation, ref_obs, atol=1e-5)
        assert out.reward == ref_r and out.terminal == ref_term
        if ref_term:
            break
        ours = tuple(float(x) for x in ref_obs)


class TestDiscretize:
    spec2 = GridSpec((40, 40), (0.0, -1.0), (1.0, 1.0))

    def test_low_corner(self):
        assert discretize((0.0, -1.0), self.spec2) == 0

    def test_high_corner(self):
        assert discretize((1.0, 1.0), self.spec2) == 40 * 40 - 1

    def test_midpoint(self):
        assert discretize((0.5, 0.0), self.spec2) == 20 * 40 + 20

    def test_clamps(self):
        assert discretize((-5.0, 9.0), self.spec2) == 39

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            discretize((0.1, 0.2, 0.3), self.spec2)

    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1))
    def test_monotone_in_each_dimension(self, x, y, dx):
        lo = discretize((x, y), self.spec2)
        assert discretize((x + dx, y), self.spec2) >= lo
        assert discretize((x, y + dx), self.spec2) >= lo

    def test_surjective_on_dense_sample(self):
        spec = GridSpec((5, 7), (0.0, 0.0), (1.0, 1.0))
        xs = np.linspace(0, 1, 60)
        cells = {discretize((a, b), spec) for a in xs for b in xs}
        assert cells == set(range(35))

    @pytest.mark.parametrize("kw", [dict(bins=(0,), low=(0,), high=(1,)), dict(bins=(2,), low=(1,), high=(1,))])
    def test_spec_invariants(self, kw):
        with pytest.raises(ValueError):
            GridSpec(**kw)

    def test_parse_grid(self):
        assert parse_grid("40x40") == (40, 40)
        assert parse_grid("12X12x12x12") == (12,) * 4
        for bad in ("40by40", "0x3", ""):
            with pytest.raises(ValueError):
                parse_grid(bad)

    def test_default_grids(self):
        assert default_grid("mountain-car").bins == (40, 40)
        assert default_grid("cart-pole").low[1] == -3.0
        assert default_grid("acrobot").n_cells == 10**6
        assert default_grid("mountain-car", (20, 30)).bins == (20, 30)


class TestGridDiscretizer:
    def test_matches_scalar_discretize(self):
        spec = default_grid("cart-pole")
        X = np.random.default_rng(0).uniform(-4, 4, size=(500, 4))
        est = GridDiscretizer(spec.bins, spec.low, spec.high).fit()
        assert est.transform(X).tolist() == [discretize(row, spec) for row in X]

    def test_learns_ranges(self):
        X = np.array([[0.0, 10.0], [1.0, 20.0]])
        est = GridDiscretizer((2, 2)).fit(X)
        assert est.spec_.low == (0.0, 10.0) and est.spec_.high == (1.0, 20.0)
        assert est.transform(X).tolist() == [0, 3]

    def test_for_env(self):
        est = GridDiscretizer.for_env("mountain-car")
        assert est.transform([[0.6, 0.07]]).tolist() == [1599]

    def test_wrong_width(self):
        est = GridDiscretizer((2, 2), (0, 0), (1, 1)).fit()
        with pytest.raises(ValueError):
            est.transform([[0.1, 0.2, 0.3]])

    def test_needs_data_without_ranges(self):
        with pytest.raises(ValueError):
            GridDiscretizer((2,)).fit()


class TestEpisodicWrappers:
    def test_discretized_env_episode(self):
        env = DiscretizedEnv("mountain-car")
        rng = np.random.default_rng(0)
        s = env.reset(rng)
        assert 0 <= s < env.n_states
        for t in range(1, 201):
            s, r, term, trunc = env.step(1)
            if term or trunc:
                break
        assert trunc and t == 200

    def test_discretized_env_grid_dimension_checked(self):
        with pytest.raises(ValueError):
            DiscretizedEnv("cart-pole", default_grid("mountain-car"))

    def test_invalid_action(self):
        env = DiscretizedEnv("cart-pole")
        env.reset(np.random.default_rng(0))
        with pytest.raises(ValueError):
            env.step(2)

    def test_mdp_env_follows_transitions(self, two_state):
        env = MdpEnv(two_state, start_state=0, terminal_states=[1])
        env.reset(np.random.default_rng(0))
        assert env.step(0) == (0, 0.0, False, False)
        assert env.step(1) == (1, 1.0, True, False)

    def test_mdp_env_empirical_frequencies(self):
        from bellmanops.mdp import random_mdp

        m = random_mdp(3, 1, 0.9, 4)
        env = MdpEnv(m, start_state=0, max_steps=1)
        rng = np.random.default_rng(1)
        counts = np.zeros(3)
        for _ in range(20000):
            env.reset(rng)
            counts[env.step(0)[0]] += 1
        np.testing.assert_allclose(counts / 20000, m.transition[0, 0], atol=0.015)

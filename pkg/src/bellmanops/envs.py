"""Classic-control tasks and uniform-grid discretisation.

Dynamics follow the usual classic-control equations of motion (the same
constants as the Gymnasium reference implementations) and are written with
plain floats so a learner can step them millions of times. Observations are
tuples; for Acrobot the observation ``(cos t1, sin t1, cos t2, sin t2, dt1,
dt2)`` fully determines the state, so every environment is a pure function
``step(name, observation, action)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

# -- constants ------------------------------------------------------------------

MOUNTAIN_CAR = dict(
    min_position=-1.2,
    max_position=0.6,
    max_speed=0.07,
    goal_position=0.5,
    force=0.001,
    gravity=0.0025,
    max_steps=200,
)

CART_POLE = dict(
    gravity=9.8,
    mass_cart=1.0,
    mass_pole=0.1,
    half_length=0.5,
    force_mag=10.0,
    tau=0.02,
    theta_threshold=12 * 2 * math.pi / 360,
    x_threshold=2.4,
    velocity_clamp=3.0,
    max_steps=500,
)

ACROBOT = dict(
    dt=0.2,
    link_length_1=1.0,
    link_mass_1=1.0,
    link_mass_2=1.0,
    link_com_1=0.5,
    link_com_2=0.5,
    link_moi=1.0,
    max_vel_1=4 * math.pi,
    max_vel_2=9 * math.pi,
    torques=(-1.0, 0.0, 1.0),
    gravity=9.8,
    max_steps=500,
)


@dataclass(frozen=True)
class EnvOutcome:
    next_observation: tuple
    reward: float
    terminal: bool
    truncated: bool


@dataclass(frozen=True)
class GridSpec:
    bins: tuple[int, ...]
    low: tuple[float, ...]
    high: tuple[float, ...]

    def __post_init__(self):
        bins = tuple(int(b) for b in self.bins)
        low = tuple(float(x) for x in self.low)
        high = tuple(float(x) for x in self.high)
        if not (len(bins) == len(low) == len(high)):
            raise ValueError("bins, low and high must have equal length")
        if any(b < 1 for b in bins):
            raise ValueError(f"bin counts must be >= 1, got {bins}")
        if any(not lo < hi for lo, hi in zip(low, high)):
            raise ValueError("each dimension needs low < high")
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def n_cells(self) -> int:
        return math.prod(self.bins)

    def with_bins(self, bins: Sequence[int]) -> "GridSpec":
        if len(bins) != len(self.bins):
            raise ValueError(f"grid needs {len(self.bins)} dimensions, got {len(bins)}")
        return GridSpec(tuple(bins), self.low, self.high)


# -- Mountain Car ---------------------------------------------------------------


class MountainCar:
    name = "mountain-car"
    n_actions = 3
    obs_dim = 2
    c = MOUNTAIN_CAR
    max_steps = c["max_steps"]
    bounds = ((c["min_position"], c["max_position"]), (-c["max_speed"], c["max_speed"]))
    default_bins = (40, 40)

    @staticmethod
    def initial(rng) -> tuple:
        return (float(rng.uniform(-0.6, -0.4)), 0.0)

    @staticmethod
    def transition(obs, action: int):
        c = MOUNTAIN_CAR
        position, velocity = obs
        velocity += (action - 1) * c["force"] + math.cos(3 * position) * (-c["gravity"])
        velocity = min(max(velocity, -c["max_speed"]), c["max_speed"])
        position += velocity
        position = min(max(position, c["min_position"]), c["max_position"])
        if position == c["min_position"] and velocity < 0:
            velocity = 0.0
        terminal = position >= c["goal_position"]
        return (position, velocity), -1.0, terminal


# -- Cart Pole ------------------------------------------------------------------


class CartPole:
    name = "cart-pole"
    n_actions = 2
    obs_dim = 4
    c = CART_POLE
    max_steps = c["max_steps"]
    # Physical limits; velocities are unbounded and clamped only for the grid.
    bounds = (
        (-2 * c["x_threshold"], 2 * c["x_threshold"]),
        (-math.inf, math.inf),
        (-2 * c["theta_threshold"], 2 * c["theta_threshold"]),
        (-math.inf, math.inf),
    )
    grid_bounds = (
        (-c["x_threshold"], c["x_threshold"]),
        (-c["velocity_clamp"], c["velocity_clamp"]),
        (-c["theta_threshold"], c["theta_threshold"]),
        (-c["velocity_clamp"], c["velocity_clamp"]),
    )
    default_bins = (12, 12, 12, 12)

    @staticmethod
    def initial(rng) -> tuple:
        return tuple(float(x) for x in rng.uniform(-0.05, 0.05, size=4))

    @staticmethod
    def transition(obs, action: int):
        c = CART_POLE
        x, x_dot, theta, theta_dot = obs
        force = c["force_mag"] if action == 1 else -c["force_mag"]
        total_mass = c["mass_cart"] + c["mass_pole"]
        pole_ml = c["mass_pole"] * c["half_length"]
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        temp = (force + pole_ml * theta_dot * theta_dot * sin_t) / total_mass
        theta_acc = (c["gravity"] * sin_t - cos_t * temp) / (
            c["half_length"] * (4.0 / 3.0 - c["mass_pole"] * cos_t * cos_t / total_mass)
        )
        x_acc = temp - pole_ml * theta_acc * cos_t / total_mass
        tau = c["tau"]
        x = x + tau * x_dot
        x_dot = x_dot + tau * x_acc
        theta = theta + tau * theta_dot
        theta_dot = theta_dot + tau * theta_acc
        terminal = (
            x < -c["x_threshold"]
            or x > c["x_threshold"]
            or theta < -c["theta_threshold"]
            or theta > c["theta_threshold"]
        )
        return (x, x_dot, theta, theta_dot), 1.0, terminal


# -- Acrobot --------------------------------------------------------------------


def _wrap(angle: float) -> float:
    two_pi = 2 * math.pi
    while angle > math.pi:
        angle -= two_pi
    while angle < -math.pi:
        angle += two_pi
    return angle


def _acrobot_derivs(s, torque):
    c = ACROBOT
    m1, m2 = c["link_mass_1"], c["link_mass_2"]
    l1 = c["link_length_1"]
    lc1, lc2 = c["link_com_1"], c["link_com_2"]
    i1 = i2 = c["link_moi"]
    g = c["gravity"]
    theta1, theta2, dtheta1, dtheta2 = s
    d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * math.cos(theta2)) + i1 + i2
    d2 = m2 * (lc2**2 + l1 * lc2 * math.cos(theta2)) + i2
    phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - math.pi / 2.0)
    phi1 = (
        -m2 * l1 * lc2 * dtheta2**2 * math.sin(theta2)
        - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * math.sin(theta2)
        + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - math.pi / 2)
        + phi2
    )
    ddtheta2 = (
        torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1**2 * math.sin(theta2) - phi2
    ) / (m2 * lc2**2 + i2 - d2**2 / d1)
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    return (dtheta1, dtheta2, ddtheta1, ddtheta2)


class Acrobot:
    name = "acrobot"
    n_actions = 3
    obs_dim = 6
    c = ACROBOT
    max_steps = c["max_steps"]
    bounds = (
        (-1.0, 1.0),
        (-1.0, 1.0),
        (-1.0, 1.0),
        (-1.0, 1.0),
        (-c["max_vel_1"], c["max_vel_1"]),
        (-c["max_vel_2"], c["max_vel_2"]),
    )
    default_bins = (10, 10, 10, 10, 10, 10)

    @staticmethod
    def observe(state) -> tuple:
        t1, t2, d1, d2 = state
        return (math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2), d1, d2)

    @staticmethod
    def initial(rng) -> tuple:
        return Acrobot.observe(tuple(float(x) for x in rng.uniform(-0.1, 0.1, size=4)))

    @staticmethod
    def transition(obs, action: int):
        c = ACROBOT
        s = (math.atan2(obs[1], obs[0]), math.atan2(obs[3], obs[2]), obs[4], obs[5])
        torque = c["torques"][action]
        dt = c["dt"]
        # one classical RK4 step over [0, dt]
        k1 = _acrobot_derivs(s, torque)
        k2 = _acrobot_derivs(tuple(a + dt / 2 * b for a, b in zip(s, k1)), torque)
        k3 = _acrobot_derivs(tuple(a + dt / 2 * b for a, b in zip(s, k2)), torque)
        k4 = _acrobot_derivs(tuple(a + dt * b for a, b in zip(s, k3)), torque)
        t1, t2, d1, d2 = (
            a + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(s, k1, k2, k3, k4)
        )
        t1, t2 = _wrap(t1), _wrap(t2)
        d1 = min(max(d1, -c["max_vel_1"]), c["max_vel_1"])
        d2 = min(max(d2, -c["max_vel_2"]), c["max_vel_2"])
        terminal = -math.cos(t1) - math.cos(t2 + t1) > 1.0
        return Acrobot.observe((t1, t2, d1, d2)), (0.0 if terminal else -1.0), terminal


ENVIRONMENTS = {cls.name: cls for cls in (MountainCar, CartPole, Acrobot)}


def get_env(name: str):
    try:
        return ENVIRONMENTS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; expected one of {sorted(ENVIRONMENTS)}") from None


def reset(env_name: str, seed) -> tuple:
    """Seeded draw from the environment's initial-state distribution."""
    env = get_env(env_name)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return env.initial(rng)


def step(env_name: str, state, action: int, elapsed: int = 0) -> EnvOutcome:
    """Advance one step; ``elapsed`` counts steps already taken in the episode."""
    env = get_env(env_name)
    if not 0 <= action < env.n_actions:
        raise ValueError(f"action {action} invalid for {env_name} ({env.n_actions} actions)")
    if len(state) != env.obs_dim:
        raise ValueError(f"{env_name} state has {env.obs_dim} components, got {len(state)}")
    nxt, reward, terminal = env.transition(tuple(state), int(action))
    truncated = not terminal and elapsed + 1 >= env.max_steps
    return EnvOutcome(nxt, reward, terminal, truncated)


def default_grid(env_name: str, bins: Sequence[int] | None = None) -> GridSpec:
    env = get_env(env_name)
    ranges = getattr(env, "grid_bounds", env.bounds)
    spec = GridSpec(env.default_bins, tuple(r[0] for r in ranges), tuple(r[1] for r in ranges))
    return spec if bins is None else spec.with_bins(bins)


def parse_grid(text: str) -> tuple[int, ...]:
    """``"40x40"`` -> ``(40, 40)``."""
    try:
        bins = tuple(int(b) for b in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"bad grid {text!r}; expected e.g. 40x40") from None
    if not bins or any(b < 1 for b in bins):
        raise ValueError(f"bad grid {text!r}")
    return bins


# -- discretisation -------------------------------------------------------------


def discretize(obs, spec: GridSpec) -> int:
    """Clamp each component to its range, bin it, flatten row-major."""
    if len(obs) != len(spec.bins):
        raise ValueError(f"observation has {len(obs)} dims, grid has {len(spec.bins)}")
    index = 0
    for x, n, lo, hi in zip(obs, spec.bins, spec.low, spec.high):
        x = min(max(float(x), lo), hi)
        b = int((x - lo) / (hi - lo) * n)
        if b >= n:
            b = n - 1
        index = index * n + b
    return index


class GridDiscretizer(TransformerMixin, BaseEstimator):
    """Map continuous observations to flat grid-cell indices.

    Parameters
    ----------
    bins : sequence of int
        Cells per dimension.
    low, high : sequence of float, optional
        Clamp ranges. Missing ranges are learned in ``fit`` from the data's
        per-dimension minimum and maximum.
    """

    def __init__(self, bins=(10, 10), low=None, high=None):
        self.bins = bins
        self.low = low
        self.high = high

    def fit(self, X=None, y=None):
        if self.low is None or self.high is None:
            if X is None:
                raise ValueError("fit needs data when low/high are not given")
            X = check_array(X)
        low = np.min(X, axis=0) if self.low is None else np.asarray(self.low, dtype=float)
        high = np.max(X, axis=0) if self.high is None else np.asarray(self.high, dtype=float)
        self.spec_ = GridSpec(tuple(self.bins), tuple(low), tuple(high))
        self.n_features_in_ = len(self.spec_.bins)
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        spec = self.spec_
        low, high = np.array(spec.low), np.array(spec.high)
        bins = np.array(spec.bins)
        clipped = np.clip(X, low, high)
        idx = np.minimum(((clipped - low) / (high - low) * bins).astype(np.int64), bins - 1)
        flat = np.zeros(X.shape[0], dtype=np.int64)
        for d in range(X.shape[1]):
            flat = flat * bins[d] + idx[:, d]
        return flat

    @classmethod
    def for_env(cls, env_name: str, bins: Sequence[int] | None = None) -> "GridDiscretizer":
        spec = default_grid(env_name, bins)
        return cls(spec.bins, spec.low, spec.high).fit()


# -- episodic wrappers used by the learners ----------------------------------------


class DiscretizedEnv:
    """A classic-control task seen through a grid: states are cell indices."""

    def __init__(self, env_name: str, grid: GridSpec | None = None, max_steps: int | None = None):
        self.env = get_env(env_name)
        self.name = env_name
        self.grid = default_grid(env_name) if grid is None else grid
        if len(self.grid.bins) != self.env.obs_dim:
            raise ValueError(f"{env_name} needs a {self.env.obs_dim}-dim grid")
        self.n_actions = self.env.n_actions
        self.n_states = self.grid.n_cells
        self.max_steps = self.env.max_steps if max_steps is None else int(max_steps)
        self._obs = None
        self._t = 0

    def reset(self, rng) -> int:
        self._obs = self.env.initial(rng)
        self._t = 0
        return discretize(self._obs, self.grid)

    def step(self, action: int):
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action {action} invalid for {self.name} ({self.n_actions} actions)")
        obs, reward, terminal = self.env.transition(self._obs, action)
        self._obs = obs
        self._t += 1
        truncated = not terminal and self._t >= self.max_steps
        return discretize(obs, self.grid), reward, terminal, truncated


class MdpEnv:
    """Sample episodes from a :class:`~bellmanops.mdp.TabularMdp`.

    Entering a state in ``terminal_states`` ends the episode. Rewards are
    the expected transition rewards ``reward[s, a, s2]``.
    """

    def __init__(self, mdp, start_state: int = 0, terminal_states=(), max_steps: int = 100):
        self.mdp = mdp
        self.n_states = mdp.n_states
        self.n_actions = mdp.n_actions
        self.start_state = start_state
        self.terminal_states = frozenset(terminal_states)
        self.max_steps = max_steps
        self._cdf = np.cumsum(mdp.transition, axis=2).tolist()
        self._reward = mdp.reward.tolist()
        self._s = start_state
        self._t = 0

    def reset(self, rng) -> int:
        # the same generator drives the transitions of the episode
        self._rng = rng
        self._s = self.start_state if self.start_state is not None else int(rng.integers(self.n_states))
        self._t = 0
        return self._s

    def step(self, action: int):
        row = self._cdf[self._s][action]
        u = float(self._rng.random())
        nxt = 0
        while nxt < len(row) - 1 and u >= row[nxt]:
            nxt += 1
        reward = self._reward[self._s][action][nxt]
        self._s = nxt
        self._t += 1
        terminal = nxt in self.terminal_states
        truncated = not terminal and self._t >= self.max_steps
        return nxt, reward, terminal, truncated

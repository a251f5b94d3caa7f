"""Sample-based evaluation and control.

Learners interact with an episodic environment exposing ``n_actions``,
``n_states``, ``reset(rng) -> state`` and ``step(action) -> (next_state,
reward, terminal, truncated)`` where states are non-negative integers (see
:class:`~bellmanops.envs.DiscretizedEnv` and :class:`~bellmanops.envs.MdpEnv`).

Every run draws from one seeded generator, split with ``SeedSequence.spawn``
into an environment stream (initial states, transitions) and an agent
stream (action selection), so two runs with the same seed but different
backups face the same sequence of initial states.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .operators import BetaSchedule, beta_at


class Backup(str, enum.Enum):
    CLASSICAL = "classical"
    CONSISTENT = "consistent"
    ADVANTAGE = "advantage"

    @classmethod
    def parse(cls, name) -> "Backup":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        if key == "bellman":
            return cls.CLASSICAL
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown backup {name!r}; expected bellman, consistent or advantage") from None


@dataclass(frozen=True)
class LearnerConfig:
    """Hyperparameters shared by SARSA and Q-learning.

    ``epsilon`` decays multiplicatively once per episode down to
    ``min_epsilon``. ``step_schedule="visit"`` replaces the constant
    ``step_size`` by ``1 / N(s, a)``. ``max_steps_per_episode=None`` keeps
    the environment's own cap. The beta schedule is indexed by episode and
    only used by the advantage backup; ``advantage_pi`` picks the policy
    inside that backup (``"greedy"`` or the ``"behavior"`` epsilon-greedy one).
    """

    step_size: float = 0.1
    epsilon: float = 1.0
    epsilon_decay: float = 0.999
    min_epsilon: float = 0.01
    episodes: int = 1000
    max_steps_per_episode: int | None = None
    seed: int = 0
    discount: float = 0.99
    backup: Backup = Backup.CLASSICAL
    beta: BetaSchedule = field(default_factory=lambda: BetaSchedule.family(1))
    advantage_pi: str = "greedy"
    step_schedule: str = "constant"
    initial_value: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "backup", Backup.parse(self.backup))
        if not 0.0 <= self.step_size <= 1.0:
            raise ValueError(f"step_size must lie in [0, 1], got {self.step_size}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ValueError(f"epsilon_decay must lie in (0, 1], got {self.epsilon_decay}")
        if not 0.0 <= self.min_epsilon <= 1.0:
            raise ValueError(f"min_epsilon must lie in [0, 1], got {self.min_epsilon}")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.max_steps_per_episode is not None and self.max_steps_per_episode < 1:
            raise ValueError("max_steps_per_episode must be >= 1")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError(f"discount must lie in [0, 1], got {self.discount}")
        if self.advantage_pi not in ("greedy", "behavior"):
            raise ValueError("advantage_pi must be 'greedy' or 'behavior'")
        if self.step_schedule not in ("constant", "visit"):
            raise ValueError("step_schedule must be 'constant' or 'visit'")

    def epsilon_at(self, episode: int) -> float:
        """Exploration rate during ``episode`` (1-based)."""
        return max(self.min_epsilon, self.epsilon * self.epsilon_decay ** (episode - 1))


@dataclass(frozen=True)
class EpisodeLog:
    episode_index: int
    total_reward: float
    steps: int


def logs_to_csv(logs: Sequence[EpisodeLog]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "total_reward", "steps"])
    for log in logs:
        w.writerow([log.episode_index, repr(float(log.total_reward)), log.steps])
    return buf.getvalue()


class SparseQTable:
    """Action values for the states actually visited.

    Unvisited states read as ``default_value`` for every action. Rows are
    Python lists, which keeps per-step updates cheap.
    """

    def __init__(self, n_actions: int, default_value: float = 0.0):
        if n_actions < 1:
            raise ValueError("n_actions must be >= 1")
        self.n_actions = n_actions
        self.default_value = float(default_value)
        self._rows: dict[int, list[float]] = {}

    def row(self, state: int) -> list[float]:
        """Mutable row for ``state``, created on first access."""
        r = self._rows.get(state)
        if r is None:
            r = [self.default_value] * self.n_actions
            self._rows[state] = r
        return r

    def values(self, state: int) -> tuple[float, ...]:
        r = self._rows.get(state)
        return tuple(r) if r is not None else (self.default_value,) * self.n_actions

    def __getitem__(self, key):
        s, a = key
        return self.values(s)[a]

    def __setitem__(self, key, value):
        s, a = key
        self.row(s)[a] = float(value)

    def __contains__(self, state) -> bool:
        return state in self._rows

    def __len__(self) -> int:
        return len(self._rows)

    def states(self) -> list[int]:
        return list(self._rows)

    def greedy_action(self, state: int) -> int:
        r = self.values(state)
        return r.index(max(r))

    def to_dense(self, n_states: int) -> np.ndarray:
        out = np.full((n_states, self.n_actions), self.default_value)
        for s, r in self._rows.items():
            out[s] = r
        return out

    def copy(self) -> "SparseQTable":
        other = SparseQTable(self.n_actions, self.default_value)
        other._rows = {s: list(r) for s, r in self._rows.items()}
        return other

    def __eq__(self, other):
        if not isinstance(other, SparseQTable):
            return NotImplemented
        return (
            self.n_actions == other.n_actions
            and self.default_value == other.default_value
            and list(self._rows.items()) == list(other._rows.items())
        )


def run_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """``(environment, agent)`` generators derived from one seed."""
    env_seq, agent_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(env_seq)), np.random.Generator(np.random.PCG64(agent_seq))


def _argmax(row) -> int:
    best, arg = row[0], 0
    for i in range(1, len(row)):
        if row[i] > best:
            best, arg = row[i], i
    return arg


def epsilon_greedy_action(q_row, epsilon: float, rng) -> int:
    """Uniform random action with probability ``epsilon``, else lowest-index argmax."""
    if len(q_row) == 0:
        raise ValueError("empty action-value row")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.random() * len(q_row))
    return _argmax(q_row)


def _sample_action(cdf_row, u: float) -> int:
    a = 0
    while a < len(cdf_row) - 1 and u >= cdf_row[a]:
        a += 1
    return a


def _episode(env, policy_cdf, rng, max_steps):
    """One trajectory under a fixed stochastic policy: lists of states and rewards."""
    s = env.reset(rng)
    states, rewards = [], []
    for _ in range(max_steps):
        a = _sample_action(policy_cdf[s], rng.random())
        s2, r, terminal, truncated = env.step(a)
        states.append(s)
        rewards.append(r)
        s = s2
        if terminal or truncated:
            break
    return states, rewards


def mc_policy_evaluation(
    env,
    policy,
    discount: float,
    episodes: int,
    mode: str = "first-visit",
    seed: int = 0,
    max_steps: int | None = None,
) -> np.ndarray:
    """Monte Carlo estimate of ``v_pi`` from complete episodes.

    ``mode`` is ``"first-visit"`` (average of first-visit returns),
    ``"every-visit"`` (average over all visits) or ``"incremental"``
    (running mean ``v += (G - v) / N`` over first visits). Episodes cut off
    at ``max_steps`` use the return of the truncated tail.
    """
    if mode not in ("first-visit", "every-visit", "incremental"):
        raise ValueError(f"unknown Monte Carlo mode {mode!r}")
    policy_cdf = np.cumsum(np.asarray(policy, dtype=float), axis=1).tolist()
    max_steps = getattr(env, "max_steps", 1000) if max_steps is None else max_steps
    rng = np.random.default_rng(seed)
    v = np.zeros(env.n_states)
    total = np.zeros(env.n_states)
    count = np.zeros(env.n_states, dtype=np.int64)
    for _ in range(episodes):
        states, rewards = _episode(env, policy_cdf, rng, max_steps)
        returns = [0.0] * len(rewards)
        g = 0.0
        for t in range(len(rewards) - 1, -1, -1):
            g = rewards[t] + discount * g
            returns[t] = g
        seen = set()
        for t, s in enumerate(states):
            if mode != "every-visit":
                if s in seen:
                    continue
                seen.add(s)
            count[s] += 1
            if mode == "incremental":
                v[s] += (returns[t] - v[s]) / count[s]
            else:
                total[s] += returns[t]
                v[s] = total[s] / count[s]
    return v


def td0_policy_evaluation(
    env,
    policy,
    step_size: float | Callable[[int], float],
    discount: float,
    episodes: int,
    seed: int = 0,
    max_steps: int | None = None,
) -> np.ndarray:
    """Online TD(0) evaluation of ``policy``.

    ``step_size`` is a constant or a function of the state's visit count
    (e.g. ``lambda n: 1 / n``). Terminal next states bootstrap to zero.
    """
    rate = step_size if callable(step_size) else (lambda n: step_size)
    if not callable(step_size) and not 0.0 < step_size <= 1.0:
        raise ValueError(f"step_size must lie in (0, 1], got {step_size}")
    policy_cdf = np.cumsum(np.asarray(policy, dtype=float), axis=1).tolist()
    max_steps = getattr(env, "max_steps", 1000) if max_steps is None else max_steps
    rng = np.random.default_rng(seed)
    v = [0.0] * env.n_states
    visits = [0] * env.n_states
    for _ in range(episodes):
        s = env.reset(rng)
        for _ in range(max_steps):
            a = _sample_action(policy_cdf[s], rng.random())
            s2, r, terminal, truncated = env.step(a)
            target = r if terminal else r + discount * v[s2]
            visits[s] += 1
            v[s] += rate(visits[s]) * (target - v[s])
            s = s2
            if terminal or truncated:
                break
    return np.array(v)


def n_step_td_target(rewards: Sequence[float], v_tail: float, discount: float) -> float:
    """``sum_{i<n} discount**i * rewards[i] + discount**n * v_tail`` with ``n = len(rewards)``."""
    if len(rewards) == 0:
        raise ValueError("n-step target needs at least one reward")
    g = float(v_tail)
    for r in reversed(rewards):
        g = float(r) + discount * g
    return g


def _episode_cap(env, config: LearnerConfig) -> int:
    cap = getattr(env, "max_steps", None)
    if config.max_steps_per_episode is not None:
        cap = config.max_steps_per_episode if cap is None else min(cap, config.max_steps_per_episode)
    if cap is None:
        raise ValueError("environment has no step cap; set max_steps_per_episode")
    return cap


def sarsa(env, config: LearnerConfig) -> tuple[SparseQTable, list[EpisodeLog]]:
    """On-policy TD control; the next action comes from the same epsilon-greedy policy.

    Only the classical on-policy target is used; ``config.backup`` is ignored.
    """
    env_rng, agent_rng = run_streams(config.seed)
    rand = agent_rng.random
    q = SparseQTable(env.n_actions, config.initial_value)
    n_actions = env.n_actions
    gamma, visit = config.discount, config.step_schedule == "visit"
    counts: dict[tuple[int, int], int] = {}
    cap = _episode_cap(env, config)
    logs = []
    for ep in range(1, config.episodes + 1):
        eps = config.epsilon_at(ep)
        s = env.reset(env_rng)
        row = q.row(s)
        a = int(rand() * n_actions) if rand() < eps else _argmax(row)
        total, steps = 0.0, 0
        try:
            while True:
                s2, r, terminal, truncated = env.step(a)
                steps += 1
                total += r
                row2 = q.row(s2)
                a2 = int(rand() * n_actions) if rand() < eps else _argmax(row2)
                target = r if terminal else r + gamma * row2[a2]
                lr = config.step_size
                if visit:
                    n = counts.get((s, a), 0) + 1
                    counts[(s, a)] = n
                    lr = 1.0 / n
                row[a] += lr * (target - row[a])
                if terminal or truncated or steps >= cap:
                    break
                s, a, row = s2, a2, row2
        except Exception as exc:
            raise RuntimeError(f"environment failure in episode {ep}, step {steps + 1}: {exc}") from exc
        logs.append(EpisodeLog(ep, total, steps))
    return q, logs


def q_learning(env, config: LearnerConfig) -> tuple[SparseQTable, list[EpisodeLog]]:
    """Off-policy TD control with a pluggable backup target.

    With ``m(x) = max_b Q(x, b)`` the targets are

    * classical:  ``r + gamma m(s')``
    * consistent: ``r + gamma Q(s, a)`` when ``s' == s``, else classical
    * advantage:  ``r + gamma m(s') + beta_j (Q(s, a) - m(s))``

    where ``beta_j`` comes from the schedule at episode ``j``. At terminal
    next states the ``gamma`` term is dropped; the advantage term stays.
    """
    env_rng, agent_rng = run_streams(config.seed)
    rand = agent_rng.random
    q = SparseQTable(env.n_actions, config.initial_value)
    n_actions = env.n_actions
    gamma, base_lr = config.discount, config.step_size
    backup = config.backup
    consistent = backup is Backup.CONSISTENT
    advantage = backup is Backup.ADVANTAGE
    behavior_pi = config.advantage_pi == "behavior"
    visit = config.step_schedule == "visit"
    counts: dict[tuple[int, int], int] = {}
    cap = _episode_cap(env, config)
    logs = []
    for ep in range(1, config.episodes + 1):
        eps = config.epsilon_at(ep)
        beta = beta_at(config.beta, ep) if advantage else 0.0
        s = env.reset(env_rng)
        total, steps = 0.0, 0
        while True:
            row = q.row(s)
            a = int(rand() * n_actions) if rand() < eps else _argmax(row)
            try:
                s2, r, terminal, truncated = env.step(a)
            except Exception as exc:
                raise RuntimeError(
                    f"environment failure in episode {ep}, step {steps + 1}: {exc}"
                ) from exc
            steps += 1
            total += r
            qsa = row[a]
            if terminal:
                target = r
            elif consistent and s2 == s:
                target = r + gamma * qsa
            else:
                row2 = q.row(s2)
                if advantage and behavior_pi:
                    nxt = (1.0 - eps) * max(row2) + eps * sum(row2) / n_actions
                else:
                    nxt = max(row2)
                target = r + gamma * nxt
            if advantage:
                if behavior_pi:
                    base = (1.0 - eps) * max(row) + eps * sum(row) / n_actions
                else:
                    base = max(row)
                target += beta * (qsa - base)
            lr = base_lr
            if visit:
                n = counts.get((s, a), 0) + 1
                counts[(s, a)] = n
                lr = 1.0 / n
            updated = qsa + lr * (target - qsa)
            if not math.isfinite(updated):
                raise FloatingPointError(f"non-finite Q value in episode {ep}, step {steps}")
            row[a] = updated
            if terminal or truncated or steps >= cap:
                break
            s = s2
        logs.append(EpisodeLog(ep, total, steps))
    return q, logs


class QLearner(BaseEstimator):
    """Tabular Q-learning as an estimator: ``fit(env)``, ``predict(states)``.

    Parameters mirror :class:`LearnerConfig`; see there for meanings.

    Attributes
    ----------
    q_table_ : SparseQTable
    episode_log_ : list of EpisodeLog
    """

    def __init__(
        self,
        backup="classical",
        step_size=0.1,
        epsilon=1.0,
        epsilon_decay=0.999,
        min_epsilon=0.01,
        episodes=1000,
        max_steps_per_episode=None,
        discount=0.99,
        beta="beta.family=1",
        advantage_pi="greedy",
        step_schedule="constant",
        seed=0,
    ):
        self.backup = backup
        self.step_size = step_size
        self.epsilon = epsilon
        self.epsilon_decay = epsilon_decay
        self.min_epsilon = min_epsilon
        self.episodes = episodes
        self.max_steps_per_episode = max_steps_per_episode
        self.discount = discount
        self.beta = beta
        self.advantage_pi = advantage_pi
        self.step_schedule = step_schedule
        self.seed = seed

    def to_config(self) -> LearnerConfig:
        beta = self.beta if isinstance(self.beta, BetaSchedule) else BetaSchedule.parse(str(self.beta))
        params = {k: v for k, v in self.get_params().items() if k != "beta"}
        return LearnerConfig(beta=beta, **params)

    def fit(self, env, y=None):
        self.q_table_, self.episode_log_ = q_learning(env, self.to_config())
        self.n_actions_ = env.n_actions
        return self

    def predict(self, states):
        check_is_fitted(self, "q_table_")
        return np.array([self.q_table_.greedy_action(int(s)) for s in np.ravel(states)], dtype=int)

    def score(self, env=None, y=None) -> float:
        """Mean total reward over the last quarter of training episodes."""
        check_is_fitted(self, "episode_log_")
        logs = self.episode_log_
        tail = logs[len(logs) - max(1, len(logs) // 4) :]
        return float(np.mean([log.total_reward for log in tail]))


def with_backup(config: LearnerConfig, backup, **changes) -> LearnerConfig:
    return replace(config, backup=Backup.parse(backup), **changes)

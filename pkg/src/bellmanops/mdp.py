"""Finite MDPs, tabular policies and value tables.

Value tables are plain float arrays: shape ``(n_states,)`` for state values
and ``(n_states, n_actions)`` for action values. A policy is a row-stochastic
``(n_states, n_actions)`` array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

PROB_TOL = 1e-12


@dataclass(frozen=True)
class TabularMdp:
    """The tuple (S, A, p, r, gamma) of a finite Markov decision process.

    Parameters
    ----------
    transition : array of shape (n_states, n_actions, n_states)
        ``transition[s, a, s2]`` is the probability of moving to ``s2``.
    reward : array of shape (n_states, n_actions, n_states)
        Reward collected on the transition ``(s, a) -> s2``.
    discount : float
        Discount factor gamma.

    Shapes are checked on construction; the probabilistic invariants are
    not, so that malformed models can still be built and reported on by
    :func:`validate_mdp`.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    expected_reward: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = np.array(self.transition, dtype=float)
        r = np.array(self.reward, dtype=float)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {p.shape}")
        if r.shape != p.shape:
            raise ValueError(f"reward shape {r.shape} does not match transition {p.shape}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("an MDP needs at least one state and one action")
        r_sa = np.einsum("ijk,ijk->ij", p, r)
        for arr in (p, r, r_sa):
            arr.flags.writeable = False
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "expected_reward", r_sa)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def r_max(self) -> float:
        return float(np.max(np.abs(self.reward))) if self.reward.size else 0.0

    @property
    def self_transition(self) -> np.ndarray:
        """``p(s | s, a)`` as an ``(n_states, n_actions)`` array."""
        return np.einsum("sas->sa", self.transition)

    def value_bound(self) -> float:
        """``r_max / (1 - gamma)``, the sup-norm bound on any value table."""
        return self.r_max / (1.0 - self.discount)


@dataclass(frozen=True)
class Violation:
    constraint: str
    state: int | None = None
    action: int | None = None
    detail: str = ""

    def __str__(self):
        where = ""
        if self.state is not None:
            where = f" at (s={self.state}, a={self.action})"
        return f"{self.constraint}{where}: {self.detail}"


def validate_mdp(mdp: TabularMdp) -> list[Violation]:
    """Return every broken MDP invariant; an empty list means valid."""
    out = []
    p, r = mdp.transition, mdp.reward
    if not (0.0 <= mdp.discount < 1.0) or not math.isfinite(mdp.discount):
        out.append(Violation("discount", detail=f"gamma={mdp.discount} not in [0, 1)"))
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            row = p[s, a]
            if not np.all(np.isfinite(row)) or np.any(row < 0.0) or np.any(row > 1.0):
                out.append(Violation("probability-range", s, a, f"entries {row.tolist()}"))
            total = float(row.sum())
            if abs(total - 1.0) > PROB_TOL:
                out.append(Violation("row-sum", s, a, f"sum={total!r}"))
            if not np.all(np.isfinite(r[s, a])):
                out.append(Violation("reward-finite", s, a, f"rewards {r[s, a].tolist()}"))
    return out


def check_mdp(mdp: TabularMdp) -> TabularMdp:
    """Raise ``ValueError`` listing all violations if ``mdp`` is invalid."""
    report = validate_mdp(mdp)
    if report:
        raise ValueError("invalid MDP:\n  " + "\n  ".join(map(str, report)))
    return mdp


def check_policy(policy, n_states: int, n_actions: int) -> np.ndarray:
    """Validate a stochastic policy table and return it as a float array."""
    pi = np.asarray(policy, dtype=float)
    if pi.shape != (n_states, n_actions):
        raise ValueError(f"policy shape {pi.shape} != ({n_states}, {n_actions})")
    if np.any(pi < 0.0) or np.any(pi > 1.0):
        raise ValueError("policy probabilities must lie in [0, 1]")
    bad = np.flatnonzero(np.abs(pi.sum(axis=1) - 1.0) > PROB_TOL)
    if bad.size:
        raise ValueError(f"policy rows {bad.tolist()} do not sum to 1")
    return pi


def check_state_values(v, mdp: TabularMdp) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (mdp.n_states,):
        raise ValueError(f"state-value table shape {v.shape} != ({mdp.n_states},)")
    return v


def check_action_values(q, mdp: TabularMdp) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(
            f"action-value table shape {q.shape} != ({mdp.n_states}, {mdp.n_actions})"
        )
    return q


def random_mdp(n_states: int, n_actions: int, discount: float, seed: int) -> TabularMdp:
    """Seeded random MDP: normalised uniform transition rows, rewards in [-1, 1]."""
    if n_states < 1 or n_actions < 1:
        raise ValueError("n_states and n_actions must be >= 1")
    if not 0.0 <= discount < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {discount}")
    rng = np.random.default_rng(seed)
    raw = rng.uniform(size=(n_states, n_actions, n_states))
    transition = raw / raw.sum(axis=2, keepdims=True)
    reward = rng.uniform(-1.0, 1.0, size=(n_states, n_actions, n_states))
    return TabularMdp(transition, reward, discount)


def two_state_mdp() -> TabularMdp:
    """Hand-solvable fixture.

    ``s0 --a0--> s0`` (reward 0), ``s0 --a1--> s1`` (reward 1), ``s1``
    absorbing with reward 0, gamma = 0.5. Then V* = (1, 0) and
    Q* = ((0.5, 1), (0, 0)).
    """
    p = np.zeros((2, 2, 2))
    r = np.zeros((2, 2, 2))
    p[0, 0, 0] = 1.0
    p[0, 1, 1] = 1.0
    r[0, 1, 1] = 1.0
    p[1, :, 1] = 1.0
    return TabularMdp(p, r, 0.5)


def uniform_policy(n_states: int, n_actions: int) -> np.ndarray:
    return np.full((n_states, n_actions), 1.0 / n_actions)


def random_policy(n_states: int, n_actions: int, seed: int) -> np.ndarray:
    raw = np.random.default_rng(seed).uniform(size=(n_states, n_actions))
    return raw / raw.sum(axis=1, keepdims=True)


def discounted_return(rewards: Iterable[float], discount: float) -> float:
    """Discounted sum ``sum_k discount**k * rewards[k]``; 0 for no rewards."""
    rewards = [float(x) for x in rewards]
    if not 0.0 <= discount < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {discount}")
    g = 0.0
    for k in range(len(rewards) - 1, -1, -1):
        if not math.isfinite(rewards[k]):
            raise ValueError(f"non-finite reward {rewards[k]!r} at index {k}")
        g = rewards[k] + discount * g
    return g


def state_values_from_q(q, policy) -> np.ndarray:
    """Policy-weighted average of each row of ``q``."""
    q = np.asarray(q, dtype=float)
    pi = np.asarray(policy, dtype=float)
    if q.shape != pi.shape:
        raise ValueError(f"q shape {q.shape} does not match policy shape {pi.shape}")
    return np.sum(q * pi, axis=1)


def greedy_actions(q) -> np.ndarray:
    """Lowest-index argmax per row."""
    return np.argmax(np.asarray(q, dtype=float), axis=1)


def greedy_policy(q) -> np.ndarray:
    """Deterministic policy putting all mass on the lowest-index argmax."""
    q = np.asarray(q, dtype=float)
    pi = np.zeros_like(q)
    pi[np.arange(q.shape[0]), greedy_actions(q)] = 1.0
    return pi


def sup_distance(u, v) -> float:
    """Sup-norm distance between two value tables of equal shape."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    if u.size == 0:
        return 0.0
    return float(np.max(np.abs(u - v)))


# -- text fixture format -------------------------------------------------------


def parse_mdp(text: str) -> TabularMdp:
    """Parse the line-oriented MDP format.

    Header ``mdp <n_states> <n_actions> <gamma>``, then one line per (s, a)::

        s a  p(0) ... p(n-1)  r(0) ... r(n-1)

    ``#`` starts a comment. Missing (s, a) lines are an error.
    """
    lines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0].strip()
        if body:
            lines.append((lineno, body.split()))
    if not lines or lines[0][1][0] != "mdp" or len(lines[0][1]) != 4:
        raise ValueError("missing header line 'mdp <n_states> <n_actions> <gamma>'")
    _, head = lines[0]
    n_s, n_a, gamma = int(head[1]), int(head[2]), float(head[3])
    if n_s < 1 or n_a < 1:
        raise ValueError(f"bad dimensions in header: {n_s} states, {n_a} actions")
    p = np.zeros((n_s, n_a, n_s))
    r = np.zeros((n_s, n_a, n_s))
    seen = set()
    for lineno, tok in lines[1:]:
        if len(tok) != 2 + 2 * n_s:
            raise ValueError(f"line {lineno}: expected {2 + 2 * n_s} fields, got {len(tok)}")
        s, a = int(tok[0]), int(tok[1])
        if not (0 <= s < n_s and 0 <= a < n_a):
            raise ValueError(f"line {lineno}: (s={s}, a={a}) out of range")
        if (s, a) in seen:
            raise ValueError(f"line {lineno}: duplicate entry for (s={s}, a={a})")
        seen.add((s, a))
        p[s, a] = [float(x) for x in tok[2 : 2 + n_s]]
        r[s, a] = [float(x) for x in tok[2 + n_s :]]
    missing = [(s, a) for s in range(n_s) for a in range(n_a) if (s, a) not in seen]
    if missing:
        raise ValueError(f"missing (s, a) lines: {missing[:5]}{'...' if len(missing) > 5 else ''}")
    return TabularMdp(p, r, gamma)


def format_mdp(mdp: TabularMdp) -> str:
    out = [f"mdp {mdp.n_states} {mdp.n_actions} {mdp.discount!r}"]
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            probs = " ".join(repr(float(x)) for x in mdp.transition[s, a])
            rews = " ".join(repr(float(x)) for x in mdp.reward[s, a])
            out.append(f"{s} {a}  {probs}  {rews}")
    return "\n".join(out) + "\n"


def load_mdp(path: str | Path) -> TabularMdp:
    return parse_mdp(Path(path).read_text())


def save_mdp(mdp: TabularMdp, path: str | Path) -> None:
    Path(path).write_text(format_mdp(mdp))


"""Picard iteration for scalar initial value problems ``y' = F(x, y)``.

The integral operator ``(T g)(x) = y0 + int_{x0}^{x} F(t, g(t)) dt`` is
discretised on a fixed grid with the composite trapezoid rule, which keeps
``T`` a map between grid functions so the fixed-point engine applies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class GridFunction:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.array(self.grid, dtype=float)
        y = np.array(self.values, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError(f"grid and values must be equal-length vectors, got {x.shape}, {y.shape}")
        if x.size > 1 and np.any(np.diff(x) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(y)):
            raise ValueError("grid function values must be finite")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "grid", x)
        object.__setattr__(self, "values", y)

    def sup_distance(self, other: "GridFunction") -> float:
        if not np.array_equal(self.grid, other.grid):
            raise ValueError("grid functions live on different grids")
        return float(np.max(np.abs(self.values - other.values)))


@dataclass(frozen=True)
class PicardProblem:
    """``y' = rhs(x, y)`` with ``y(x0) = y0`` on ``interval``.

    ``rhs`` is called with numpy arrays and must broadcast. ``x0`` has to be
    one of the ``grid_n`` equally spaced grid nodes.
    """

    rhs: Callable
    x0: float
    y0: float
    interval: tuple[float, float]
    grid_n: int = 4001
    grid: np.ndarray = field(init=False, repr=False, compare=False)
    origin: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lo, hi = map(float, self.interval)
        if not lo < hi:
            raise ValueError(f"empty interval {self.interval}")
        if not lo <= self.x0 <= hi:
            raise ValueError(f"x0={self.x0} outside {self.interval}")
        if self.grid_n < 2:
            raise ValueError("grid_n must be >= 2")
        grid = np.linspace(lo, hi, self.grid_n)
        i0 = int(np.argmin(np.abs(grid - self.x0)))
        if abs(grid[i0] - self.x0) > 1e-12 * max(1.0, abs(hi - lo)):
            raise ValueError(f"x0={self.x0} is not a grid node; adjust grid_n or the interval")
        grid.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "origin", i0)

    def constant(self, value: float | None = None) -> GridFunction:
        return GridFunction(self.grid, np.full(self.grid_n, self.y0 if value is None else value))


@dataclass
class PicardResult:
    solution: GridFunction
    residual_history: list[float]
    iterates: list[GridFunction] = field(default_factory=list, repr=False)


def picard_step(problem: PicardProblem, current: GridFunction) -> GridFunction:
    """One application of the discretised integral operator."""
    if current.grid.shape != problem.grid.shape or not np.array_equal(current.grid, problem.grid):
        raise ValueError("current iterate is not defined on the problem grid")
    x = problem.grid
    f = np.broadcast_to(np.asarray(problem.rhs(x, current.values), dtype=float), x.shape)
    bad = np.flatnonzero(~np.isfinite(f))
    if bad.size:
        i = int(bad[0])
        raise FloatingPointError(f"F is not finite at grid point x={float(x[i])!r} (index {i})")
    steps = 0.5 * (f[1:] + f[:-1]) * np.diff(x)
    cumulative = np.concatenate(([0.0], np.cumsum(steps)))
    return GridFunction(x, problem.y0 + (cumulative - cumulative[problem.origin]))


def solve_ivp_picard(
    problem: PicardProblem,
    iterations: int,
    initial: GridFunction | None = None,
    keep_iterates: bool = False,
) -> PicardResult:
    """Apply :func:`picard_step` ``iterations`` times from the constant ``y0``."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    g = problem.constant() if initial is None else initial
    history, iterates = [], [g] if keep_iterates else []
    for _ in range(iterations):
        nxt = picard_step(problem, g)
        history.append(nxt.sup_distance(g))
        g = nxt
        if keep_iterates:
            iterates.append(g)
    return PicardResult(g, history, iterates)


def lipschitz_estimate(rhs: Callable, xs, ys, seed: int = 0, samples: int = 2000) -> float:
    """Largest sampled difference quotient ``|F(x,y1)-F(x,y2)| / |y1-y2|``."""
    rng = np.random.default_rng(seed)
    xs = np.asarray(xs, dtype=float)
    lo, hi = float(np.min(ys)), float(np.max(ys))
    x = rng.choice(xs, size=samples)
    y1 = rng.uniform(lo, hi, size=samples)
    y2 = rng.uniform(lo, hi, size=samples)
    keep = y1 != y2
    num = np.abs(np.asarray(rhs(x, y1), dtype=float) - np.asarray(rhs(x, y2), dtype=float))
    return float(np.max(num[keep] / np.abs(y1 - y2)[keep]))


# -- the worked example x'(t) = x/2 - t, x(0) = 0 --------------------------------


def example_rhs(t, x):
    return 0.5 * x - t


def example_solution(t):
    """Closed form ``2t + 4 - 4 exp(t/2)`` of the example problem."""
    t = np.asarray(t, dtype=float)
    return 2.0 * t + 4.0 - 4.0 * np.exp(t / 2.0)


def example_problem(t_max: float = 4.0, grid_n: int = 4001) -> PicardProblem:
    return PicardProblem(example_rhs, 0.0, 0.0, (0.0, t_max), grid_n)


def picard_table(result: PicardResult, reference: Callable = example_solution) -> list[tuple]:
    """Rows ``(x, y_numeric, y_reference, abs_error)`` for CSV export."""
    x = result.solution.grid
    y = result.solution.values
    ref = np.asarray(reference(x), dtype=float)
    return [(float(a), float(b), float(c), math.fabs(b - c)) for a, b, c in zip(x, y, ref)]

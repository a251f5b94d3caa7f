"""Banach fixed-point iteration on value tables under the sup norm."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100_000


class DivergenceError(ArithmeticError):
    """The iterated map produced a non-finite table."""

    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"non-finite value produced at iteration {iteration}")


@dataclass
class FixedPointResult:
    """Outcome of :func:`iterate_to_fixed_point`.

    ``residual_history[n]`` is ``||x_{n+1} - x_n||_inf``, so
    ``residual_history[0]`` is the first step length ``d(x0, x1)``.
    ``iterates`` is only filled when requested and then holds ``x_0 .. x_N``.
    """

    fixed_point: np.ndarray
    iterations: int
    final_residual: float
    residual_history: list[float]
    converged: bool
    iterates: list[np.ndarray] = field(default_factory=list, repr=False)


@dataclass
class ContractionReport:
    estimated_modulus: float
    sample_count: int
    worst_pair: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)


def iterate_to_fixed_point(
    f: Callable,
    x0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    *,
    indexed: bool = False,
    record_iterates: bool = False,
) -> FixedPointResult:
    """Iterate ``x_{n+1} = f(x_n)`` until the step length drops below ``tol``.

    Parameters
    ----------
    f : callable
        Self-map of value tables. With ``indexed=True`` it is called as
        ``f(x, j)`` where ``j = 1, 2, ...`` counts applications, which lets
        iteration-dependent operators (beta schedules) use the engine.
    x0 : array_like
        Starting table; never modified.
    tol : float
        Stop once ``||x_{n+1} - x_n||_inf < tol``.
    max_iter : int
        Maximum number of map applications.
    record_iterates : bool
        Keep every iterate in the result (memory grows with iterations).

    Raises
    ------
    DivergenceError
        If ``f`` returns a non-finite entry.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    x = np.array(x0, dtype=float)
    history: list[float] = []
    iterates = [x.copy()] if record_iterates else []
    converged = False
    for n in range(1, max_iter + 1):
        nxt = np.asarray(f(x, n) if indexed else f(x), dtype=float)
        if nxt.shape != x.shape:
            raise ValueError(f"map changed table shape {x.shape} -> {nxt.shape}")
        if not np.all(np.isfinite(nxt)):
            raise DivergenceError(n)
        residual = float(np.max(np.abs(nxt - x))) if x.size else 0.0
        history.append(residual)
        x = nxt
        if record_iterates:
            iterates.append(x.copy())
        if residual < tol:
            converged = True
            break
    return FixedPointResult(
        fixed_point=x,
        iterations=len(history),
        final_residual=history[-1],
        residual_history=history,
        converged=converged,
        iterates=iterates,
    )


def apriori_error_bound(modulus: float, n: int, first_step: float) -> float:
    """``modulus**n / (1 - modulus) * first_step``, the a-priori distance bound."""
    if not 0.0 <= modulus < 1.0:
        raise ValueError(f"modulus must lie in [0, 1), got {modulus}")
    if n < 0 or first_step < 0:
        raise ValueError("n and first_step must be non-negative")
    return modulus**n / (1.0 - modulus) * first_step


def aposteriori_error_bound(modulus: float, last_step: float) -> float:
    """``modulus / (1 - modulus) * ||x_n - x_{n-1}||`` bound on ``||x_n - x*||``."""
    if not 0.0 <= modulus < 1.0:
        raise ValueError(f"modulus must lie in [0, 1), got {modulus}")
    return modulus / (1.0 - modulus) * last_step


def estimate_contraction_modulus(
    f: Callable,
    shape,
    trials: int = 1000,
    seed: int = 0,
    low: float = -10.0,
    high: float = 10.0,
) -> ContractionReport:
    """Largest observed ``||f(u) - f(v)|| / ||u - v||`` over random pairs.

    Entries of ``u`` and ``v`` are uniform on ``[low, high]``. The result is
    a lower bound on the Lipschitz constant of ``f``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    best, worst = 0.0, None
    for _ in range(trials):
        u = rng.uniform(low, high, size=shape)
        v = rng.uniform(low, high, size=shape)
        denom = float(np.max(np.abs(u - v))) if u.size else 0.0
        if denom == 0.0:
            continue
        ratio = float(np.max(np.abs(np.asarray(f(u)) - np.asarray(f(v))))) / denom
        if worst is None or ratio > best:
            best, worst = ratio, (u, v)
    return ContractionReport(best, trials, worst)


def residuals_to_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "residual"])
    for i, r in enumerate(history, 1):
        w.writerow([i, repr(float(r))])
    return buf.getvalue()

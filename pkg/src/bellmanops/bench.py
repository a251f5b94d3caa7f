"""Experiment harness: backup variants x seeds on one discretised task.

A run writes, under ``output_dir``:

* ``<env>__<operator>__seed<k>.csv``: ``episode,total_reward,steps`` per cell
* ``aggregate.csv``: ``episode,<operator>...`` with the seed-averaged reward
  smoothed by a trailing moving average
* ``summary.csv``: per-operator final-quartile means and seed spread
* ``manifest.json``: config hash, cell timings and failures

All CSV files are pure functions of the configuration.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .envs import ENVIRONMENTS, DiscretizedEnv, GridSpec, default_grid, parse_grid
from .model_free import Backup, EpisodeLog, LearnerConfig, logs_to_csv, q_learning, sarsa
from .operators import BetaSchedule
from .plotting import emit_plot


class ConfigError(ValueError):
    pass


ALGORITHMS = {"q-learning": q_learning, "sarsa": sarsa}


@dataclass(frozen=True)
class ExperimentConfig:
    env_name: str
    grid: GridSpec
    learner: LearnerConfig
    operators: tuple[str, ...] = ("bellman", "consistent", "advantage")
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    smoothing_window: int = 100
    output_dir: str = "runs"
    algorithm: str = "q-learning"

    def __post_init__(self):
        if self.env_name not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.env_name!r}; expected one of {sorted(ENVIRONMENTS)}")
        if not self.operators:
            raise ConfigError("experiment.operators must list at least one backup")
        if len(set(self.operators)) != len(self.operators):
            raise ConfigError("experiment.operators contains duplicates")
        for op in self.operators:
            try:
                Backup.parse(op)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if not self.seeds:
            raise ConfigError("experiment.seeds must list at least one seed")
        if self.smoothing_window < 1:
            raise ConfigError("experiment.smoothing_window must be >= 1")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {sorted(ALGORITHMS)}")

    def cells(self) -> list[tuple[str, int]]:
        return [(op, seed) for op in self.operators for seed in self.seeds]

    def cell_config(self, operator: str, seed: int) -> LearnerConfig:
        return replace(self.learner, backup=Backup.parse(operator), seed=seed)

    def canonical(self) -> dict:
        """Everything that determines the results (the output directory does not)."""
        learner = asdict(self.learner)
        learner["backup"] = self.learner.backup.value
        learner["beta"] = str(self.learner.beta)
        learner.pop("seed")
        return {
            "env": {"name": self.env_name, "bins": list(self.grid.bins),
                    "low": list(self.grid.low), "high": list(self.grid.high)},
            "learner": learner,
            "algorithm": self.algorithm,
            "operators": list(self.operators),
            "seeds": list(self.seeds),
            "smoothing_window": self.smoothing_window,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict, output_dir: str | None = None) -> "ExperimentConfig":
        known = {"env", "learner", "experiment"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        env = dict(data.get("env", {}))
        learner = dict(data.get("learner", {}))
        exp = dict(data.get("experiment", {}))
        try:
            name = env.pop("name")
        except KeyError:
            raise ConfigError("[env] needs a name") from None
        if name not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {name!r}; expected one of {sorted(ENVIRONMENTS)}")
        try:
            grid = _grid_from(name, env)
            lc, algorithm, seed = _learner_from(learner)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        env_cap = env.pop("max_steps", None)
        if env_cap is not None and lc.max_steps_per_episode is None:
            lc = replace(lc, max_steps_per_episode=int(env_cap))
        if env:
            raise ConfigError(f"unknown [env] keys {sorted(env)}")
        seeds = exp.pop("seeds", [seed])
        operators = exp.pop("operators", ["bellman", "consistent", "advantage"])
        window = exp.pop("smoothing_window", 100)
        out = output_dir or exp.pop("output_dir", "runs")
        exp.pop("output_dir", None)
        if exp:
            raise ConfigError(f"unknown [experiment] keys {sorted(exp)}")
        if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
            raise ConfigError("experiment.seeds must be a list of integers")
        if not isinstance(operators, list):
            raise ConfigError("experiment.operators must be a list")
        return cls(name, grid, lc, tuple(str(o).lower() for o in operators), tuple(seeds),
                   int(window), str(out), algorithm)

    @classmethod
    def from_toml(cls, path, output_dir: str | None = None) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data, output_dir)


def _grid_from(name: str, env: dict) -> GridSpec:
    bins = env.pop("grid", None)
    if isinstance(bins, str):
        bins = parse_grid(bins)
    spec = default_grid(name, bins)
    low = env.pop("low", None)
    high = env.pop("high", None)
    if low is not None or high is not None:
        spec = GridSpec(spec.bins, tuple(low or spec.low), tuple(high or spec.high))
    return spec


_LEARNER_KEYS = {
    "step_size", "epsilon", "epsilon_decay", "min_epsilon", "episodes", "discount",
    "step_schedule", "initial_value",
}


def _learner_from(learner: dict) -> tuple[LearnerConfig, str, int]:
    algorithm = str(learner.pop("algorithm", "q-learning")).lower()
    seed = int(learner.pop("seed", 0))
    kwargs = {k: learner.pop(k) for k in list(learner) if k in _LEARNER_KEYS}
    if "max_steps" in learner:
        kwargs["max_steps_per_episode"] = int(learner.pop("max_steps"))
    if "backup" in learner:
        kwargs["backup"] = learner.pop("backup")
    beta = learner.pop("beta", None)
    if beta is not None:
        if not isinstance(beta, dict) or len(beta) != 1:
            raise ConfigError("give exactly one of beta.family or beta.constant")
        (key, value), = beta.items()
        kwargs["beta"] = BetaSchedule.parse(f"{key}={value}")
    adv = learner.pop("advantage", None)
    if adv is not None:
        if not isinstance(adv, dict) or set(adv) != {"pi"}:
            raise ConfigError("[learner] advantage table only accepts 'pi'")
        kwargs["advantage_pi"] = adv["pi"]
    if learner:
        raise ConfigError(f"unknown [learner] keys {sorted(learner)}")
    return LearnerConfig(seed=seed, **kwargs), algorithm, seed


# -- running -----------------------------------------------------------------------------


@dataclass
class CellResult:
    operator: str
    seed: int
    logs: list[EpisodeLog] = field(default_factory=list, repr=False)
    seconds: float = 0.0
    error: str | None = None

    @property
    def cell_id(self) -> str:
        return f"{self.operator}/seed{self.seed}"

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RunResult:
    config: ExperimentConfig
    cells: list[CellResult]
    config_hash: str
    output_dir: Path

    @property
    def failures(self) -> list[CellResult]:
        return [c for c in self.cells if not c.ok]

    def logs(self, operator: str) -> list[list[EpisodeLog]]:
        return [c.logs for c in self.cells if c.operator == operator and c.ok]


def run_cell(config: ExperimentConfig, operator: str, seed: int) -> CellResult:
    """Train one learner; exceptions are captured, not raised."""
    start = time.perf_counter()
    try:
        env = DiscretizedEnv(config.env_name, config.grid)
        _, logs = ALGORITHMS[config.algorithm](env, config.cell_config(operator, seed))
        return CellResult(operator, seed, logs, time.perf_counter() - start)
    except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the others
        return CellResult(operator, seed, [], time.perf_counter() - start, f"{type(exc).__name__}: {exc}")


def _worker_count(n_cells: int) -> int:
    raw = os.environ.get("BENCH_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"BENCH_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("BENCH_THREADS must be >= 1")
    return min(n, n_cells)


def smoothed_mean(series: list[list[float]], window: int) -> np.ndarray:
    """Average across runs per episode, then a trailing moving average.

    Episode ``i`` averages episodes ``max(1, i - window + 1) .. i``.
    """
    mean = np.mean(np.asarray(series, dtype=float), axis=0)
    csum = np.concatenate(([0.0], np.cumsum(mean)))
    idx = np.arange(1, len(mean) + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def final_quartile_mean(logs: list[EpisodeLog]) -> float:
    """Mean total reward over the last quarter of the episodes (at least one)."""
    if not logs:
        raise ValueError("no episodes")
    k = max(1, len(logs) // 4)
    return float(np.mean([log.total_reward for log in logs[-k:]]))


def final_quartile_means(result: RunResult) -> dict[str, list[float]]:
    return {op: [final_quartile_mean(l) for l in result.logs(op)] for op in result.config.operators}


def aggregate_csv(result: RunResult) -> str:
    ops = [op for op in result.config.operators if result.logs(op)]
    if not ops:
        return ""
    columns = {}
    for op in ops:
        columns[op] = smoothed_mean(
            [[log.total_reward for log in logs] for logs in result.logs(op)],
            result.config.smoothing_window,
        )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", *ops])
    for i in range(len(columns[ops[0]])):
        w.writerow([i + 1, *(repr(float(columns[op][i])) for op in ops)])
    return buf.getvalue()


def summary_csv(result: RunResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["operator", "seeds", "final_quartile_mean", "seed_std"])
    for op, vals in final_quartile_means(result).items():
        if not vals:
            continue
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        w.writerow([op, len(vals), repr(float(np.mean(vals))), repr(std)])
    return buf.getvalue()


def run_experiment(config: ExperimentConfig, write: bool = True) -> RunResult:
    """Run every ``(operator, seed)`` cell, then write CSVs in a fixed order."""
    cells = config.cells()
    workers = _worker_count(len(cells))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, config, op, seed) for op, seed in cells]
            results = [f.result() for f in futures]
    else:
        results = [run_cell(config, op, seed) for op, seed in cells]
    out = Path(config.output_dir)
    result = RunResult(config, results, config.config_hash(), out)
    if write:
        write_outputs(result)
    return result


def cell_filename(config: ExperimentConfig, operator: str, seed: int) -> str:
    return f"{config.env_name}__{operator}__seed{seed}.csv"


def write_outputs(result: RunResult) -> None:
    cfg, out = result.config, result.output_dir
    out.mkdir(parents=True, exist_ok=True)
    for cell in result.cells:
        if cell.ok:
            (out / cell_filename(cfg, cell.operator, cell.seed)).write_text(logs_to_csv(cell.logs))
    agg = aggregate_csv(result)
    if agg:
        (out / "aggregate.csv").write_text(agg)
        (out / "summary.csv").write_text(summary_csv(result))
    manifest = {
        "config_hash": result.config_hash,
        "config": cfg.canonical(),
        "cells": [
            {"cell": c.cell_id, "seconds": round(c.seconds, 3), "error": c.error} for c in result.cells
        ],
        "failures": [c.cell_id for c in result.failures],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def plot_run(result: RunResult, svg_name: str = "aggregate.svg") -> Path:
    title = f"{result.config.env_name}: smoothed reward (window {result.config.smoothing_window})"
    return emit_plot(result.output_dir / "aggregate.csv", result.output_dir / svg_name, title=title)

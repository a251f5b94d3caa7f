"""Command-line entry point.

Exit codes: 0 success, 1 a run or check failed, 2 bad configuration or input.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .bench import ConfigError, ExperimentConfig, final_quartile_means, plot_run, run_experiment
from .dp import ConvergenceError, policy_iteration, value_iteration
from .mdp import TabularMdp, load_mdp, random_mdp, two_state_mdp, validate_mdp
from .picard import example_problem, example_solution, picard_table, solve_ivp_picard
from .plotting import PlotDataError, emit_plot, line_chart_svg

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# -- bench ------------------------------------------------------------------------------


def cmd_bench_run(args) -> int:
    config = ExperimentConfig.from_toml(args.config, args.out)
    result = run_experiment(config)
    for cell in result.failures:
        print(f"cell {cell.cell_id} failed: {cell.error}", file=sys.stderr)
    if not args.no_plot and any(c.ok for c in result.cells):
        plot_run(result)
    for op, vals in final_quartile_means(result).items():
        if vals:
            print(f"{op}: final-quartile mean {np.mean(vals):.3f} over {len(vals)} seeds")
    print(f"config {result.config_hash} -> {result.output_dir}")
    return EXIT_FAILED if result.failures else EXIT_OK


def cmd_bench_plot(args) -> int:
    emit_plot(args.input, args.out, title=args.title or "")
    return EXIT_OK


# -- solve ------------------------------------------------------------------------------


def _load_mdp(path: str) -> TabularMdp:
    if path == "two-state":
        return two_state_mdp()
    try:
        mdp = load_mdp(path)
    except OSError as exc:
        raise ConfigError(f"cannot read MDP {path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    problems = validate_mdp(mdp)
    if problems:
        raise ConfigError(f"{path}: " + "; ".join(str(p) for p in problems))
    return mdp


def cmd_solve(args) -> int:
    mdp = _load_mdp(args.mdp)
    if args.algorithm == "value-iteration":
        v, policy = value_iteration(mdp, args.tol)
    else:
        res = policy_iteration(mdp, args.tol)
        v, policy = res.state_values, res.policy
    actions = np.argmax(policy, axis=1)
    rows = [(s, repr(float(v[s])), int(actions[s])) for s in range(mdp.n_states)]
    _write(_csv(rows, ["state", "value", "action"]), args.out)
    return EXIT_OK


# -- picard -----------------------------------------------------------------------------


def cmd_picard(args) -> int:
    problem = example_problem(args.t_max, args.grid_n)
    result = solve_ivp_picard(problem, args.iterations, keep_iterates=True)
    rows = [tuple(repr(v) for v in row) for row in picard_table(result)]
    _write(_csv(rows, ["x", "y_numeric", "y_reference", "abs_error"]), args.out)
    if args.residuals:
        res_rows = [(i, repr(r)) for i, r in enumerate(result.residual_history, start=1)]
        _write(_csv(res_rows, ["iteration", "residual"]), args.residuals)
    if args.svg:
        stride = max(1, args.grid_n // 200)
        x = problem.grid[::stride].tolist()
        shown = sorted({1, 2, 3, 5, args.iterations} & set(range(1, args.iterations + 1)))
        series = {f"iterate {k}": result.iterates[k].values[::stride].tolist() for k in shown}
        series["exact"] = example_solution(problem.grid[::stride]).tolist()
        svg = line_chart_svg(x, series, x_label="t", y_label="x(t)", title="Picard iterates")
        _write(svg, args.svg)
    return EXIT_OK


# -- analyze ----------------------------------------------------------------------------


def _mdps(args) -> list[tuple[str, TabularMdp]]:
    if args.mdp:
        return [(Path(p).stem if p != "two-state" else p, _load_mdp(p)) for p in args.mdp]
    return [
        (f"random{args.seed + i}", random_mdp(args.states, args.actions, args.discount, args.seed + i))
        for i in range(args.random)
    ]


def cmd_analyze(args) -> int:
    from .operators import BetaSchedule

    beta = BetaSchedule.parse(args.beta) if args.beta else None
    mdps = _mdps(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    theorem_failures = 0
    summary = []
    checks = ["contraction", "monotonicity", "preservation", "gap", "cross"] if args.check == "all" else [args.check]

    if "contraction" in checks or "monotonicity" in checks:
        rows_c, rows_m = [], []
        for mdp_id, mdp in mdps:
            for op in args.operators:
                if "contraction" in checks:
                    c = analysis.check_contraction(op, mdp, args.trials, args.seed, beta=beta)
                    rows_c.append((mdp_id, c.operator.value, repr(c.estimated_modulus), repr(c.discount), int(c.violation), c.claim))
                    theorem_failures += c.violation and c.claim == analysis.THEOREM
                if "monotonicity" in checks:
                    m = analysis.check_monotonicity(op, mdp, args.trials, args.seed, beta=beta)
                    rows_m.append((mdp_id, m.operator.value, m.trials, m.violations, m.claim))
                    theorem_failures += bool(m.violations) and m.claim == analysis.THEOREM
        if rows_c:
            (out / "contraction.csv").write_text(_csv(rows_c, ["mdp", "operator", "modulus", "discount", "violation", "claim"]))
            summary.append(f"contraction: {sum(r[4] for r in rows_c)} violations in {len(rows_c)} checks")
        if rows_m:
            (out / "monotonicity.csv").write_text(_csv(rows_m, ["mdp", "operator", "trials", "violations", "claim"]))
            summary.append(f"monotonicity: {sum(r[3] for r in rows_m)} violating pairs in {len(rows_m)} checks")

    alt_ops = [op for op in args.operators if analysis.parse_operator_kind(op).acts_on_q]
    for name, fn in (("preservation", analysis.check_optimality_preservation), ("gap", analysis.check_gap_increasing)):
        if name not in checks:
            continue
        rows = []
        for mdp_id, mdp in mdps:
            for op in alt_ops:
                chk = fn(mdp, op, beta=beta)
                rows.append((mdp_id, chk.operator.value, chk.verdict, chk.value_mode, len(chk.violations), chk.claim))
                theorem_failures += chk.verdict == "violated" and chk.claim == analysis.THEOREM
        (out / f"{name}.csv").write_text(_csv(rows, ["mdp", "operator", "verdict", "value_mode", "violations", "claim"]))
        verdicts = [r[2] for r in rows]
        summary.append(
            f"{name}: {verdicts.count('preserved')} preserved, {verdicts.count('violated')} violated, "
            f"{verdicts.count('inconclusive')} inconclusive"
        )

    if "cross" in checks:
        text = ""
        for mdp_id, mdp in mdps:
            rep = analysis.fixed_point_cross_report(mdp, alt_ops, mdp_id)
            body = rep.to_csv()
            text += body if not text else body.split("\n", 1)[1]
            rates = ", ".join(f"{n}={rep.agreement_rate(n):.3f}" for n in rep.tables)
            summary.append(f"cross {mdp_id}: argmax agreement {rates}")
        (out / "cross.csv").write_text(text)

    print("\n".join(summary))
    if theorem_failures:
        print(f"{theorem_failures} theorem-backed checks failed", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bellmanops", description="Bellman operator experiments")
    sub = p.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="run or plot Q-learning experiments")
    bsub = bench.add_subparsers(dest="bench_command", required=True)
    run = bsub.add_parser("run", help="run an experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="override [experiment] output_dir")
    run.add_argument("--no-plot", action="store_true")
    run.set_defaults(func=cmd_bench_run)
    plot = bsub.add_parser("plot", help="render an aggregate CSV as SVG")
    plot.add_argument("--in", dest="input", required=True)
    plot.add_argument("--out", required=True)
    plot.add_argument("--title")
    plot.set_defaults(func=cmd_bench_plot)

    solve = sub.add_parser("solve", help="solve a tabular MDP")
    solve.add_argument("--algorithm", choices=["policy-iteration", "value-iteration"], default="value-iteration")
    solve.add_argument("--mdp", required=True, help="MDP text file, or 'two-state'")
    solve.add_argument("--tol", type=float, default=1e-8)
    solve.add_argument("--out", help="CSV path (stdout when omitted)")
    solve.set_defaults(func=cmd_solve)

    pic = sub.add_parser("picard", help="Picard iteration for x' = x/2 - t, x(0) = 0")
    pic.add_argument("--iterations", type=int, default=30)
    pic.add_argument("--grid-n", type=int, default=4001)
    pic.add_argument("--t-max", type=float, default=4.0)
    pic.add_argument("--out", help="CSV path (stdout when omitted)")
    pic.add_argument("--residuals", help="CSV of successive residuals")
    pic.add_argument("--svg", help="SVG of selected iterates against the exact solution")
    pic.set_defaults(func=cmd_picard)

    an = sub.add_parser("analyze", help="check operator properties on small MDPs")
    an.add_argument("--check", choices=["contraction", "monotonicity", "preservation", "gap", "cross", "all"], default="all")
    an.add_argument("--operators", nargs="+", default=["optimality_q", "consistent_q", "advantage_q"])
    an.add_argument("--mdp", nargs="+", help="MDP files (or 'two-state'); random MDPs when omitted")
    an.add_argument("--random", type=int, default=10, help="number of random MDPs")
    an.add_argument("--states", type=int, default=6)
    an.add_argument("--actions", type=int, default=3)
    an.add_argument("--discount", type=float, default=0.9)
    an.add_argument("--seed", type=int, default=0)
    an.add_argument("--trials", type=int, default=1000)
    an.add_argument("--beta", help="beta.family=k or beta.constant=x for the advantage operator")
    an.add_argument("--out-dir", default="analysis")
    an.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PlotDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())

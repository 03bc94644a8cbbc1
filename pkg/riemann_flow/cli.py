"""Command-line entry point.

Usage:
    riemann-flow train --config run.toml --out runs/full
    riemann-flow eval --checkpoint runs/full/epoch_020.ckpt --data target.graphs
    riemann-flow geom-check --c -1 --d 3 --out reports/volume.csv
    riemann-flow dynamics --mode adversarial --out reports/trajectory.csv
    riemann-flow gen --spec shift.toml --out data/

Exit codes: 0 success, 2 config/parse error, 3 numerical abort or failed check.
"""
from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagnostics, dynamics
from .config import ABLATIONS, LogSettings, load_config, load_synthetic_spec
from .datasets import generate_synthetic_shift, load_graph_file, mean_degree, write_graph_file
from .errors import ConfigError, ConvergenceFailure, DomainViolation, InvalidSpec, NonFinite, ParseError
from .logging_config import configure_logging
from .polar import volume_growth_table
from .train import evaluate, train

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riemann-flow", description="Riemannian flow matching for graph domain adaptation."
    )
    parser.add_argument("--log-level", default=None, help="Override the logging level (default INFO).")
    sub = parser.add_subparsers(dest="command", required=True)

    train_p = sub.add_parser("train", help="Train encoder, classifier and vector field.")
    train_p.add_argument("--config", default=None, help="TOML run config.")
    train_p.add_argument("--out", required=True, help="Output directory for metrics.csv and checkpoints.")
    train_p.add_argument("--ablation", choices=ABLATIONS, default=None, help="Override the config's ablation preset.")

    eval_p = sub.add_parser("eval", help="Classification accuracy of a checkpoint on a graph file.")
    eval_p.add_argument("--checkpoint", required=True)
    eval_p.add_argument("--data", required=True)

    geom_p = sub.add_parser("geom-check", help="Run the geometry invariant suites and write the volume-growth CSV.")
    geom_p.add_argument("--c", type=float, required=True, help="Curvature.")
    geom_p.add_argument("--d", type=int, required=True, help="Manifold dimension.")
    geom_p.add_argument("--out", required=True, help="Volume-growth CSV; suite results go next to it.")
    geom_p.add_argument("--cases", type=int, default=diagnostics.DEFAULT_CASES)
    geom_p.add_argument("--seed", type=int, default=0)

    dyn_p = sub.add_parser("dynamics", help="Simulate adversarial or flow-matching dynamics.")
    dyn_p.add_argument("--mode", choices=("adversarial", "flow"), required=True)
    dyn_p.add_argument("--out", required=True, help="Trajectory CSV; spectrum.csv is written alongside.")
    dyn_p.add_argument("--dt", type=float, default=None)
    dyn_p.add_argument("--steps", type=int, default=1000)
    dyn_p.add_argument("--seed", type=int, default=0)
    dyn_p.add_argument("--scale", type=float, default=0.0, help="Self-interaction scale eps of the game Jacobian.")

    gen_p = sub.add_parser("gen", help="Generate the shifted synthetic benchmark.")
    gen_p.add_argument("--spec", required=True, help="TOML generator spec.")
    gen_p.add_argument("--out", required=True, help="Output directory for source.graphs and target.graphs.")
    gen_p.add_argument("--seed", type=int, default=0)
    gen_p.add_argument("--unlabeled-target", action="store_true", help="Write target labels as '?'.")
    return parser


def _cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.ablation:
        config = replace(config, ablation=args.ablation)
    configure_logging(LogSettings(level=args.log_level) if args.log_level else config.log)
    result = train(config, args.out)
    last = result.rows[-1]
    print(f"metrics: {result.metrics_path}")
    print(f"checkpoint: {result.checkpoint_path}")
    target = "n/a" if last.target_accuracy is None else f"{last.target_accuracy:.4f}"
    print(f"source_accuracy={last.source_accuracy:.4f} target_accuracy={target}")
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    accuracy = evaluate(args.checkpoint, load_graph_file(args.data))
    print(f"accuracy={accuracy:.6f}")
    return EXIT_OK


def _cmd_geom_check(args: argparse.Namespace) -> int:
    out = Path(args.out)
    rows = diagnostics.run_checks(args.c, args.d, cases=args.cases, seed=args.seed)
    checks_path = diagnostics.write_check_csv(out.with_name(f"{out.stem}_checks.csv"), rows)
    radii = diagnostics.DEFAULT_RADII
    if args.c > 0:
        radii = tuple(np.linspace(0.0, np.pi / np.sqrt(args.c), 7)[1:])
    diagnostics.write_volume_csv(out, volume_growth_table(args.c, args.d, radii))
    failed = [row.suite for row in rows if not row.passed]
    for row in rows:
        status = "ok" if row.passed else "FAIL"
        print(f"{row.suite:<28} {status:<4} max_error={row.max_error:.3g} tol={row.tolerance:.1g}")
    print(f"volume: {out}\nchecks: {checks_path}")
    return EXIT_NUMERIC if failed else EXIT_OK


def _cmd_dynamics(args: argparse.Namespace) -> int:
    out = Path(args.out)
    if args.mode == "adversarial":
        dt = args.dt or 0.01
        run = dynamics.simulate_flow(dynamics.bilinear_game_field(), [1.0, 0.0], dt, args.steps)
        jacobian = dynamics.minimax_jacobian(dynamics.GameState.at_equilibrium(np.eye(1)), args.scale)
    else:
        dt = args.dt or 0.005
        problem = dynamics.fm_regression_problem(hidden=(8,), seed=args.seed)
        run = dynamics.simulate_flow(problem.field, problem.x0, dt, args.steps)
        # negative Hessian at the end point; symmetric for a gradient field
        raw = dynamics.field_jacobian(problem.field, run.states[-1])
        jacobian = 0.5 * (raw + raw.T)
    dynamics.write_trajectory_csv(out, run)
    spectrum = dynamics.eigen_spectrum(jacobian)
    spectrum_path = dynamics.write_spectrum_csv(out.with_name("spectrum.csv"), spectrum)
    report = dynamics.lyapunov_monitor(run.losses, run.field_norms, dt)
    stats = dynamics.grad_norm_stats(run.field_norms)
    print(f"trajectory: {out}\nspectrum: {spectrum_path}")
    print(
        f"monotone={report.monotone} oscillating={report.oscillating} violations={len(report.violations)} "
        f"grad_norm_mean={stats.mean:.4g} grad_norm_var={stats.variance:.4g}"
    )
    if args.mode == "flow" and not report.monotone:
        LOGGER.error("dynamics: flow-matching loss increased at steps %s", report.violations[:10])
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_gen(args: argparse.Namespace) -> int:
    spec = load_synthetic_spec(args.spec)
    source, target = generate_synthetic_shift(spec, args.seed)
    if args.unlabeled_target:
        target = [replace(graph, label=None) for graph in target]
    out = Path(args.out)
    write_graph_file(out / "source.graphs", source)
    write_graph_file(out / "target.graphs", target)
    print(f"source={len(source)} mean_degree={mean_degree(source):.3f} -> {out / 'source.graphs'}")
    print(f"target={len(target)} mean_degree={mean_degree(target):.3f} -> {out / 'target.graphs'}")
    return EXIT_OK


COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "geom-check": _cmd_geom_check,
    "dynamics": _cmd_dynamics,
    "gen": _cmd_gen,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command != "train":
            configure_logging(LogSettings(level=args.log_level or "INFO"))
        return COMMANDS[args.command](args)
    except (ConfigError, ParseError, InvalidSpec) as exc:
        LOGGER.error("%s: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFinite, ConvergenceFailure, DomainViolation) as exc:
        LOGGER.error("%s: numerical abort: %s", args.command, exc)
        if isinstance(exc, NonFinite) and exc.partial is not None:
            print(f"last checkpoint: {exc.partial}", file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())

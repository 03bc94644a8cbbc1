#!/usr/bin/env python3
"""Multi-seed ablation runner.

Usage:
    python scripts/run_ablation.py --config config/run.toml --out runs/ablation
    python scripts/run_ablation.py --seeds 0 1 2 --presets full source_only --json

Trains every preset on every seed against the same synthetic shift and prints
the median final target accuracy per preset, plus the gap to source-only.
"""

from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from dataclasses import replace
from pathlib import Path

from riemann_flow.config import ABLATIONS, LogSettings, load_config
from riemann_flow.errors import ConfigError, NonFinite
from riemann_flow.logging_config import configure_logging
from riemann_flow.train import train

LOGGER = logging.getLogger("riemann_flow.run_ablation")


def format_table(medians: dict[str, float], scores: dict[str, list[float]]) -> str:
    baseline = medians.get("source_only")
    lines = [f"{'preset':<12} {'median':>8} {'vs source':>10}  per-seed"]
    for name, median in medians.items():
        gap = "" if baseline is None else f"{100.0 * (median - baseline):+.1f}pt"
        per_seed = " ".join(f"{v:.3f}" for v in scores[name])
        lines.append(f"{name:<12} {median:>8.4f} {gap:>10}  {per_seed}")
    return "\n".join(lines)


def main() -> int:
    p = argparse.ArgumentParser(description="Median-of-seeds ablation comparison")
    p.add_argument("--config", default=None, help="TOML run config (default: built-in defaults)")
    p.add_argument("--out", default="runs/ablation", help="Directory for per-run metrics and checkpoints")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument(
        "--presets", nargs="+", choices=ABLATIONS, default=["full", "source_only", "no_fm", "no_ra", "no_aa"]
    )
    p.add_argument("--json", action="store_true", help="Emit JSON instead of a table")
    p.add_argument("--log-level", default="WARNING")
    args = p.parse_args()

    try:
        configure_logging(LogSettings(level=args.log_level))
        base = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out)
    scores: dict[str, list[float]] = {}
    for preset in args.presets:
        for seed in args.seeds:
            config = replace(base, ablation=preset, seed=seed)
            try:
                result = train(config, out / f"{preset}_seed{seed}")
            except NonFinite as exc:
                print(f"error: {preset} seed={seed}: {exc}", file=sys.stderr)
                return 3
            accuracy = result.rows[-1].target_accuracy
            if accuracy is None:
                print("error: target graphs are unlabeled; nothing to compare", file=sys.stderr)
                return 2
            LOGGER.info("ablation: preset=%s seed=%d target_accuracy=%.4f", preset, seed, accuracy)
            scores.setdefault(preset, []).append(accuracy)

    medians = {name: statistics.median(values) for name, values in scores.items()}
    if args.json:
        print(json.dumps({"medians": medians, "scores": scores, "seeds": args.seeds}, indent=2))
    else:
        print(format_table(medians, scores))
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: simulate, sweep, analytic, validate."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

sys.path.append(os.path.abspath(os.path.dirname(__file__)))

from shared import analytic
from shared.config import InvalidConfig, Settings, load_config
from shared.experiment import AXES, EmptyTable, IoFailure, aggregate, emit_csv, run, sweep
from shared.logs import get_logger

logger = get_logger("cli")


def _int_list(text: str) -> List[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _float_list(text: str) -> List[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.protocol:
        config = config.with_overrides(protocol=args.protocol)
    seeds = [args.seed] if args.seed is not None else [config.rng_seed + k for k in range(config.runs)]
    results = [run(config, seed) for seed in seeds]
    emit_csv([aggregate("speed", config.v_max, config.protocol, results)], args.out)
    for metrics in results:
        print(
            f"seed={metrics.seed} success={metrics.query_success_rate:.4f} "
            f"error_m={metrics.avg_location_error:.2f} bandwidth={metrics.bandwidth:.3f} "
            f"storage_mean={metrics.storage_mean:.2f} z_m={metrics.hop_progress_mean_m:.1f}"
        )
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    workers = args.workers or Settings.from_env().sweep_workers
    values = _float_list(args.values) if args.values else None
    table = sweep(config, args.axis, args.protocols.split(","), values=values, workers=workers)
    emit_csv(table, args.out)
    return 0


def cmd_analytic(args: argparse.Namespace) -> int:
    rows = analytic.report_rows(
        _int_list(args.n),
        _float_list(args.v),
        density=args.density,
        R=args.r,
        z=args.z,
        level_scale_exponent=args.base,
        normalize_hit_probs=args.normalized,
    )
    path = Path(args.out)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=analytic.ANALYTIC_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: f"{v:.6g}" if isinstance(v, float) else v for k, v in row.items()})
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc

    if args.slopes:
        template = analytic.AnalyticParams(
            A=1.0, N=1, H=1, R=args.r, v=_float_list(args.v)[0], z=args.z,
            level_scale_exponent=args.base, normalize_hit_probs=args.normalized,
        )
        for metric in ("maintenance", "query", "storage"):
            slope = analytic.scaling_slope(metric, _int_list(args.slope_n), template, args.density)
            print(f"{metric} log-log slope={slope:.3f}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    grid = config.grid
    print(
        f"ok: levels={grid.levels} cells={grid.cells_per_side}x{grid.cells_per_side} "
        f"cell_side={grid.cell_side} radio_range={config.radio_range} protocol={config.protocol.value}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Hierarchical location service simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario (all seeds, or one with --seed)")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--protocol", choices=["hls", "phls1", "phls2"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="sweep speed or density for several protocols")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", choices=sorted(AXES), required=True)
    p.add_argument("--protocols", default="hls,phls1,phls2")
    p.add_argument("--values", help="comma separated axis values, default the standard range")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analytic", help="evaluate the cost model")
    p.add_argument("--n", required=True, help="comma separated node counts")
    p.add_argument("--v", required=True, help="comma separated speeds (m/s)")
    p.add_argument("--density", type=float, default=3e-4, help="nodes per square metre")
    p.add_argument("--r", type=float, default=125.0, help="level-0 side length (m)")
    p.add_argument("--z", type=float, default=analytic.DEFAULT_HOP_PROGRESS, help="mean per-hop progress (m)")
    p.add_argument("--base", type=int, choices=[2, 4], default=4, help="per-level distance growth")
    p.add_argument("--normalized", action="store_true", help="use hit probabilities that sum to 1")
    p.add_argument("--slopes", action="store_true", help="also print log-log scaling slopes")
    p.add_argument("--slope-n", default="100,400,1600,6400,25600,102400")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidConfig, EmptyTable, IoFailure, ValueError) as exc:
        logger.error("command=%s failed: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

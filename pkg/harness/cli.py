"""Command-line interface: ``run``, ``list-problems``, ``weights``, ``truncate-demo``."""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from lowrank_sdc.config import FULL_FINAL_TIME, PROBLEM_IDS
from lowrank_sdc.errors import LowRankSDCError
from lowrank_sdc.lowrank import TruncationMode, truncate_dense
from lowrank_sdc.sdc import lobatto_grid
from .config_loader import PROFILES, load_experiment_config, profile_config
from .experiment_runner import run_experiment

logger = logging.getLogger(__name__)

PROBLEM_DESCRIPTIONS = {
    "manufactured": "rotation + isotropic diffusion with manufactured source (exact, rank 1)",
    "schrodinger": "Schrodinger equation with quadratic potential (complex, RK4 reference)",
    "anisotropic": "solid body rotation with anisotropic diffusion (RK4 reference)",
    "rotation": "pure rigid body rotation (exact by rotating the initial data)",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrsdc",
        description="Low-rank SDC-mBUG integrator and benchmark harness",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
    lrsdc run configs/manufactured-desk.cfg --jobs 4
    lrsdc run --profile desk --problem rotation
    lrsdc weights 3
    lrsdc truncate-demo soft 1e-3 matrix.npy
        """,
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run an experiment matrix")
    run.add_argument("config", nargs="?", help="Path to a key = value experiment config")
    run.add_argument("--profile", choices=PROFILES, help="Built-in profile instead of a config file")
    run.add_argument("--problem", choices=PROBLEM_IDS, help="Problem id for --profile")
    run.add_argument("--jobs", "-j", type=int, default=1, help="Concurrent experiment cells")
    run.add_argument("--out", type=str, help="Output directory (overrides out_dir)")
    run.add_argument("--no-svg", action="store_true", help="Skip the SVG rank plots")

    sub.add_parser("list-problems", help="List the benchmark problem ids")

    weights = sub.add_parser("weights", help="Print the SDC quadrature weight table")
    weights.add_argument("P", type=int, help="Number of subintervals")

    demo = sub.add_parser("truncate-demo", help="Truncate a dense matrix read from a file")
    demo.add_argument("mode", help="hard or soft")
    demo.add_argument("eps", type=float, help="Truncation tolerance")
    demo.add_argument("matrix_path", help="Matrix as .npy or whitespace-separated text")
    return parser


def _cmd_run(args) -> int:
    if args.config and args.profile:
        print("Error: give either a config file or --profile, not both")
        return 2
    if args.config:
        config = load_experiment_config(args.config)
    elif args.profile:
        if not args.problem:
            print("Error: --profile needs --problem")
            return 2
        config = profile_config(args.profile, args.problem)
    else:
        print("Error: run needs a config path or --profile/--problem")
        return 2

    updates = {}
    if args.out:
        updates["out_dir"] = args.out
    if args.no_svg:
        updates["svg"] = False
    if updates:
        config = config.model_copy(update=updates)

    summary = run_experiment(config, jobs=args.jobs)
    failed = [row for row in summary.rows if row.error]
    print(f"\n[lrsdc] Done. {len(summary.rows)} cells, {len(failed)} failed.")
    print(f"[lrsdc] Output: {Path(config.out_dir) / config.problem}")
    return 1 if failed else 0


def _cmd_list_problems() -> int:
    for name in PROBLEM_IDS:
        print(f"{name:<14} T={FULL_FINAL_TIME[name]:<8.4g} {PROBLEM_DESCRIPTIONS[name]}")
    return 0


def _cmd_weights(P: int) -> int:
    grid = lobatto_grid(P, 0.0, 1.0)
    frame = pd.DataFrame(
        grid.weights,
        index=[f"m={m}" for m in range(grid.P)],
        columns=[f"s={s}" for s in range(grid.P + 1)],
    )
    print(f"Gauss-Lobatto nodes on [0, 1]: {np.array2string(grid.nodes, precision=12)}")
    print("Weights w[m, s] (integral over [t_m, t_m+1] divided by its length):")
    print(frame.to_string(float_format=lambda v: f"{v: .12f}"))
    return 0


def _load_matrix(path: str) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"matrix file not found: {path}")
    if path.suffix == ".npy":
        return np.load(path)
    return np.loadtxt(path, ndmin=2)


def _cmd_truncate_demo(mode: str, eps: float, matrix_path: str) -> int:
    matrix = _load_matrix(matrix_path)
    truncation = TruncationMode.parse(mode)
    result = truncate_dense(matrix, eps, truncation)
    error = np.linalg.norm(matrix - result.to_dense())
    print(f"{truncation.value} truncation of a {matrix.shape[0]}x{matrix.shape[1]} matrix at eps={eps:g}")
    print(f"rank {result.rank}, error {error:.6g}")
    print("retained singular values:")
    for sigma in result.S:
        print(f"  {sigma:.12g}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "list-problems":
            return _cmd_list_problems()
        if args.command == "weights":
            return _cmd_weights(args.P)
        if args.command == "truncate-demo":
            return _cmd_truncate_demo(args.mode, args.eps, args.matrix_path)
    except (LowRankSDCError, OSError, ValueError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command}")
    return 2


if __name__ == "__main__":
    sys.exit(main())

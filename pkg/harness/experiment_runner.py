"""Experiment Runner - executes the benchmark x order x mode x N_t matrix"""

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

import solver_config
from lowrank_sdc.errors import LowRankSDCError
from lowrank_sdc.lowrank import TruncationMode, truncate_dense
from lowrank_sdc.problems import BenchmarkProblem, build_problem
from lowrank_sdc.reference import ReferenceSolution, load_reference, rk4_dense, save_reference
from lowrank_sdc.sdc import integrate
from models import ConvergenceRow, ExperimentConfig, RunSummary, SolveStatistics
from run_paths import RunPaths
from .reporting import compute_rates, emit_csv, emit_rank_svg, emit_series_csv, scheme_label

logger = logging.getLogger(__name__)


def _setup_file_logging(log_path: Path) -> Tuple[Path, logging.Handler]:
    """Add a file handler writing to ``log_path`` to the root logger."""
    log_path.parent.mkdir(parents=True, exist_ok=True)
    file_handler = logging.FileHandler(log_path, encoding="utf-8")
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(
        logging.Formatter("%(asctime)s [%(levelname)s] %(name)s: %(message)s")
    )
    logging.getLogger().addHandler(file_handler)
    return log_path, file_handler


@dataclass
class CellResult:
    """Everything one (order, mode, N_t) run produces"""

    order: int
    mode: str
    nt: int
    row: ConvergenceRow
    ranks: List[Tuple[float, int]] = field(default_factory=list)
    reference_ranks: List[Tuple[float, int]] = field(default_factory=list)
    errors: List[Tuple[float, float]] = field(default_factory=list)
    statistics: Dict[str, SolveStatistics] = field(default_factory=dict)


def reference_step_count(nt_list: Sequence[int], ref_refine: int) -> int:
    """``ref_refine * lcm(nt_list)`` so every run's time grid lies on the reference grid."""
    return ref_refine * reduce(math.lcm, nt_list)


class ExperimentRunner:
    """Runs one ExperimentConfig and writes every artifact under its RunPaths"""

    def __init__(self, config: ExperimentConfig, run_paths: Optional[RunPaths] = None, jobs: int = 1):
        self.config = config
        self.run_paths = run_paths or RunPaths.for_experiment(config.problem, config.out_dir)
        self.jobs = max(1, int(jobs))
        self.problem: Optional[BenchmarkProblem] = None
        self.reference: Optional[ReferenceSolution] = None
        self.reference_steps: Optional[int] = None
        self.C = config.grid_constant()

    # Sample grids -----------------------------------------------------------------

    def _sample_indices(self, nt: int) -> List[int]:
        """Step indices of one run at which ranks and errors are written."""
        stride = self.config.rank_stride
        indices = list(range(0, nt + 1, stride))
        if indices[-1] != nt:
            indices.append(nt)
        return indices

    def _sample_time(self, n: int, nt: int) -> float:
        return self.config.t_final if n == nt else n * self.config.t_final / nt

    # Reference ------------------------------------------------------------------------

    def _prepare_reference(self) -> None:
        cfg = self.config
        if cfg.reference == "exact":
            if not self.problem.has_exact():
                raise LowRankSDCError(f"problem '{cfg.problem}' has no exact solution")
            return
        steps = reference_step_count(cfg.nt_list, cfg.ref_refine)
        self.reference_steps = steps
        wanted = set()
        for nt in cfg.nt_list:
            factor = steps // nt
            wanted.update(n * factor for n in self._sample_indices(nt))
        indices = sorted(wanted)
        times = [cfg.t_final if i == steps else i * cfg.t_final / steps for i in indices]

        cache = self.run_paths.reference_cache(cfg.nx, cfg.ny, steps)
        if cache.exists():
            try:
                cached = load_reference(cache)
                if cached.times.shape[0] == len(times) and np.allclose(cached.times, times, rtol=0, atol=1e-12):
                    logger.info(f"Reusing cached RK4 reference: {cache}")
                    self.reference = cached
                    return
                logger.info(f"Cached reference {cache} has different samples; recomputing")
            except LowRankSDCError as exc:
                logger.warning(f"Ignoring unreadable reference cache {cache}: {exc}")

        logger.info(f"Computing RK4 reference: {steps} steps, {len(times)} samples")
        t0 = time.time()
        self.reference = rk4_dense(self.problem.ode, self.problem.X0.to_dense(), 0.0, cfg.t_final, steps, times)
        save_reference(self.reference, cache)
        logger.info(f"✓ Reference computed in {time.time() - t0:.1f}s and cached at {cache}")

    def _reference_state(self, t: float) -> np.ndarray:
        if self.reference is None:
            return self.problem.exact_dense(t)
        return self.reference.at(t)

    # Cells -------------------------------------------------------------------------------

    def run_cell(self, order: int, mode: str, nt: int) -> CellResult:
        """Integrate one cell and measure its error; solver failures stay in the row."""
        cfg = self.config
        label = scheme_label(order, mode)
        row = ConvergenceRow(scheme=label, order=order, mode=mode, nt=nt)
        result = CellResult(order=order, mode=mode, nt=nt, row=row)
        sample = self._sample_indices(nt)
        keep_errors = self.problem.has_exact()

        start = time.monotonic()
        try:
            trajectory = integrate(
                self.problem.ode,
                self.problem.X0,
                0.0,
                cfg.t_final,
                nt,
                order,
                TruncationMode.parse(mode),
                self.C,
                state_stride=cfg.rank_stride if keep_errors else 0,
            )
        except LowRankSDCError as exc:
            logger.error(f"  {label} Nt={nt}: {exc}")
            result.row = row.model_copy(update={"error": str(exc)})
            return result
        elapsed = time.monotonic() - start

        points = trajectory.points
        final = trajectory.final
        l2_error = self.problem.l2_error(final, self._reference_state(cfg.t_final))
        updates = {
            "l2_error": l2_error,
            "final_rank": final.rank,
            "max_rank": max(p.rank for p in points),
        }
        if cfg.record_wall_time:
            updates["wall_seconds"] = elapsed
        result.row = row.model_copy(update=updates)

        result.ranks = [(self._sample_time(n, nt), points[n].rank) for n in sample]
        if keep_errors:
            result.errors = [
                (self._sample_time(n, nt), self.problem.l2_error(points[n].state, self.problem.exact_dense(points[n].t)))
                for n in sample
                if points[n].state is not None
            ]

        h = cfg.t_final / nt
        ref_eps = self.C * h ** (order + 1)
        ref_mode = TruncationMode.parse(mode)
        result.reference_ranks = [
            (self._sample_time(n, nt), truncate_dense(self._reference_state(self._sample_time(n, nt)), ref_eps, ref_mode).rank)
            for n in sample
        ]

        for kind in ("k_step", "l_step", "s_step"):
            result.statistics[kind] = SolveStatistics()
        for record in trajectory.solves():
            result.statistics[record.kind].add(record)

        logger.info(
            f"  {label} Nt={nt}: L2 error {l2_error:.3e}, final rank {final.rank}, "
            f"max rank {updates['max_rank']} ({elapsed:.1f}s)"
        )
        return result

    def _cells(self) -> List[Tuple[int, str, int]]:
        cfg = self.config
        return [(order, mode, nt) for order in cfg.orders for mode in cfg.modes for nt in cfg.nt_list]

    # Driver ------------------------------------------------------------------------------

    def run(self) -> RunSummary:
        cfg = self.config
        log_path, handler = _setup_file_logging(self.run_paths.experiment_log())
        try:
            run_start = time.time()
            logger.info(f"\n{'='*60}")
            logger.info(f"Experiment '{cfg.problem}' on {cfg.nx}x{cfg.ny}, T={cfg.t_final:.6g}, C={self.C:.6g}")
            logger.info(f"Run folder: {self.run_paths.root}")
            logger.info(f"{'='*60}\n")

            self.problem = build_problem(cfg.problem, cfg.nx, cfg.ny)
            self._prepare_reference()

            cells = self._cells()
            logger.info(f"Running {len(cells)} cells with {self.jobs} worker(s)...")
            if self.jobs == 1:
                results = [self.run_cell(*cell) for cell in cells]
            else:
                with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                    results = list(pool.map(lambda cell: self.run_cell(*cell), cells))

            summary = self._write_outputs(results)
            logger.info(f"\n{'='*60}")
            logger.info(f"Experiment complete! Total time: {time.time() - run_start:.1f}s")
            logger.info(f"Log file: {log_path}")
            logger.info(f"{'='*60}\n")
            return summary
        finally:
            logging.getLogger().removeHandler(handler)
            handler.close()

    def _write_outputs(self, results: List[CellResult]) -> RunSummary:
        cfg = self.config
        paths = self.run_paths
        order_index = {(order, mode, nt): i for i, (order, mode, nt) in enumerate(self._cells())}
        results = sorted(results, key=lambda r: order_index[(r.order, r.mode, r.nt)])

        rows = compute_rates([r.row for r in results])
        emit_csv(rows, paths.convergence_csv())

        for r in results:
            if not r.ranks:
                continue
            emit_series_csv(r.ranks, paths.rank_series_csv(r.order, r.mode, r.nt), "rank")
            emit_series_csv(r.reference_ranks, paths.reference_rank_csv(r.order, r.mode, r.nt), "rank")
            if r.errors:
                emit_series_csv(r.errors, paths.error_series_csv(r.order, r.mode, r.nt), "l2_error")

        if cfg.svg:
            for mode in cfg.modes:
                for nt in cfg.nt_list:
                    cell_results = [r for r in results if r.mode == mode and r.nt == nt and r.ranks]
                    if not cell_results:
                        continue
                    series = {scheme_label(r.order, r.mode): r.ranks for r in cell_results}
                    references = {scheme_label(r.order, r.mode): r.reference_ranks for r in cell_results}
                    emit_rank_svg(series, paths.rank_svg(mode, nt), references=references,
                                  title=f"{cfg.problem}, {mode} truncation, Nt={nt}")

        statistics = {
            f"{paths.run_label(cfg.problem, r.order, r.mode, r.nt)}/{kind}": stats
            for r in results
            for kind, stats in r.statistics.items()
        }
        violations = sum(s.violations for s in statistics.values())
        if violations:
            logger.warning(f"{violations} implicit solve(s) missed their residual contract")

        summary = RunSummary(
            problem=cfg.problem,
            config=cfg.model_dump(),
            grid_constant=self.C,
            rows=rows,
            solve_statistics=statistics,
            solve_contracts=solver_config.SOLVE_CONTRACTS,
            reference_steps=self.reference_steps,
        )
        summary_path = paths.run_summary_json()
        with open(summary_path, "w", encoding="utf-8") as f:
            json.dump(summary.model_dump(mode="json"), f, indent=2)
        logger.info(f"✓ Run summary saved to: {summary_path}")
        return summary


def run_experiment(config: ExperimentConfig, jobs: int = 1, run_paths: Optional[RunPaths] = None) -> RunSummary:
    """Run the full experiment matrix of ``config``."""
    return ExperimentRunner(config, run_paths=run_paths, jobs=jobs).run()

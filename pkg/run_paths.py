"""RunPaths: per-experiment output folder management.

Every artifact of one experiment lives under ``{out_dir}/{problem}/``.
The folder name is not timestamped, so rerunning the same config
overwrites the same files. Components that write to disk accept a
``RunPaths`` instance and use its named methods to locate their files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

RUNS_ROOT_DIR = "./runs"


@dataclass(frozen=True)
class RunPaths:
    """Container of every subdirectory used by one experiment run."""

    root: Path
    problem: str
    tables: Path
    ranks: Path
    plots: Path
    references: Path
    logs: Path

    @classmethod
    def for_experiment(
        cls,
        problem: str,
        runs_root: Optional[Union[str, Path]] = None,
    ) -> "RunPaths":
        """Create and materialize the run folder for ``problem``."""
        runs_root_path = Path(runs_root) if runs_root is not None else Path(RUNS_ROOT_DIR)
        instance = cls._build(runs_root_path / problem, problem)
        instance._ensure()
        return instance

    @classmethod
    def from_existing(cls, run_dir: Union[str, Path]) -> "RunPaths":
        """Reattach to an already-created run folder."""
        root = Path(run_dir)
        if not root.is_dir():
            raise ValueError(f"Run directory '{root}' does not exist")
        instance = cls._build(root, root.name)
        instance._ensure()
        return instance

    @classmethod
    def _build(cls, root: Path, problem: str) -> "RunPaths":
        return cls(
            root=root,
            problem=problem,
            tables=root / "tables",
            ranks=root / "ranks",
            plots=root / "plots",
            references=root / "references",
            logs=root / "logs",
        )

    def _ensure(self) -> None:
        for p in (self.root, self.tables, self.ranks, self.plots, self.references, self.logs):
            try:
                p.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise OSError(f"Could not create output directory {p}: {exc}") from exc

    @staticmethod
    def run_label(problem: str, order: int, mode: str, nt: int) -> str:
        return f"{problem}-{order}-{mode}-Nt{nt}"

    def convergence_csv(self) -> Path:
        return self.tables / f"{self.problem}-convergence.csv"

    def rank_series_csv(self, order: int, mode: str, nt: int) -> Path:
        return self.ranks / f"{self.run_label(self.problem, order, mode, nt)}.csv"

    def error_series_csv(self, order: int, mode: str, nt: int) -> Path:
        return self.ranks / f"{self.run_label(self.problem, order, mode, nt)}-error.csv"

    def reference_rank_csv(self, order: int, mode: str, nt: int) -> Path:
        return self.ranks / f"{self.run_label(self.problem, order, mode, nt)}-ref.csv"

    def rank_svg(self, mode: str, nt: int) -> Path:
        return self.plots / f"{self.problem}-{mode}-Nt{nt}-ranks.svg"

    def reference_cache(self, nx: int, ny: int, steps: int) -> Path:
        return self.references / f"{self.problem}-{nx}x{ny}-rk4-{steps}.bin"

    def run_summary_json(self) -> Path:
        return self.root / "run_summary.json"

    def experiment_log(self) -> Path:
        return self.logs / "experiment.log"

"""Loading of flat ``key = value`` experiment configs and built-in profiles."""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import dotenv_values
from pydantic import ValidationError

from lowrank_sdc.config import (
    DEFAULT_REF_REFINE,
    DESK_GRID_SIZE,
    DESK_NT_LISTS,
    DESK_RANK_STRIDE,
    EXACT_REFERENCE_PROBLEMS,
    EXPERIMENT_OUTPUT_DIR,
    FULL_FINAL_TIME,
    FULL_GRID_SIZE,
    FULL_NT_LISTS,
    FULL_RANK_STRIDE,
    PROBLEM_IDS,
)
from lowrank_sdc.errors import ConfigError
from models import ExperimentConfig

logger = logging.getLogger(__name__)

LIST_KEYS = ("nt_list", "orders", "modes")
KNOWN_KEYS = (
    "problem", "nx", "ny", "t_final", "nt_list", "orders", "modes", "reference",
    "ref_refine", "out_dir", "rank_stride", "c_override", "record_wall_time", "svg",
)
PROFILES = ("desk", "full")


def _split_list(value: str):
    return [item.strip() for item in value.split(",") if item.strip()]


def parse_config_values(raw: Dict[str, Optional[str]], source: str = "<config>") -> ExperimentConfig:
    """Validate raw string values into an ExperimentConfig."""
    unknown = sorted(set(raw) - set(KNOWN_KEYS))
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(unknown)}")
    values: Dict[str, Any] = {}
    for key, value in raw.items():
        if value is None or value.strip() == "":
            continue
        values[key] = _split_list(value) if key in LIST_KEYS else value.strip()
    try:
        return ExperimentConfig(**values)
    except ValidationError as exc:
        raise ConfigError(f"{source}: invalid experiment config:\n{exc}") from exc


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read a config file with one ``key = value`` per line, lists comma-separated."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = dotenv_values(path)
    config = parse_config_values(dict(raw), source=str(path))
    logger.info(f"Loaded experiment config for '{config.problem}' from {path}")
    return config


def profile_config(profile: str, problem: str, out_dir: Optional[str] = None) -> ExperimentConfig:
    """Built-in ``full`` (200x200, published step lists) or ``desk`` (96x96, halved lists) profile."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile '{profile}', expected one of {', '.join(PROFILES)}")
    if problem not in PROBLEM_IDS:
        raise ConfigError(f"unknown problem '{problem}', expected one of {', '.join(PROBLEM_IDS)}")
    size = FULL_GRID_SIZE if profile == "full" else DESK_GRID_SIZE
    nt_list = FULL_NT_LISTS[problem] if profile == "full" else DESK_NT_LISTS[problem]
    reference = "exact" if problem in EXACT_REFERENCE_PROBLEMS else "rk4"
    try:
        return ExperimentConfig(
            problem=problem,
            nx=size,
            ny=size,
            t_final=FULL_FINAL_TIME[problem],
            nt_list=list(nt_list),
            orders=[2, 3, 4],
            modes=["hard", "soft"],
            reference=reference,
            ref_refine=DEFAULT_REF_REFINE,
            out_dir=out_dir or EXPERIMENT_OUTPUT_DIR,
            rank_stride=FULL_RANK_STRIDE if profile == "full" else DESK_RANK_STRIDE,
        )
    except ValidationError as exc:
        raise ConfigError(f"profile {profile}/{problem}: {exc}") from exc

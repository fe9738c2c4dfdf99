"""
Run configuration

Sources, in increasing priority:
- model defaults
- ``key = value`` config file (parsed with python-dotenv)
- command-line flags

Environment (optionally from a ``.env`` file):
- TSR_LOG_LEVEL     logging level (default INFO)
- TSR_DATABASE_URL  SQLAlchemy URL of the run ledger (disabled when unset)
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any, Literal, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from tsr.annealing import AnnealSchedule
from tsr.errors import InputError

logger = logging.getLogger("tsr.config")

load_dotenv()

LOG_LEVEL: str = os.getenv("TSR_LOG_LEVEL", "INFO").upper()
LOG_FORMAT: str = "%(asctime)s [%(levelname)s] %(name)s - %(message)s"


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(level=level or LOG_LEVEL, format=LOG_FORMAT)


# ------------------------------------------------------------------------------
# Run configuration model
# ------------------------------------------------------------------------------
class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    target_path: Optional[Path] = None
    out_dir: Path = Path("out")
    master_seed: int = Field(0, ge=0)

    # stage one
    library_seeds: list[int] = Field(default_factory=lambda: [1])
    library_selection: Literal["first", "lineal"] = "first"
    budget_factor: int = Field(3_000, ge=1)
    restart_cap: int = Field(5, ge=0)
    patience: int = Field(20, ge=0)
    workers: int = Field(1, ge=1)

    # stage two
    starts: int = Field(16, ge=1)
    t0: float = Field(5e-5, gt=0)
    ratio: float = Field(0.82, gt=0, lt=1)
    delta: float = Field(7e-5, gt=0)
    max_step: Optional[int] = Field(None, ge=1)
    max_loops: int = Field(60, ge=1)
    scale_stride: int = Field(2, ge=1)
    loop_c: int = Field(10, ge=1)
    count_infeasible: bool = False

    @field_validator("library_seeds", mode="before")
    @classmethod
    def _split_seeds(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [int(part) for part in value.replace(" ", "").split(",") if part]
        return value

    @field_validator("library_seeds")
    @classmethod
    def _non_negative_seeds(cls, value: list[int]) -> list[int]:
        if any(seed < 0 for seed in value):
            raise ValueError("library seeds must be >= 0")
        return value

    def schedule(self, rng_seed: int) -> AnnealSchedule:
        return AnnealSchedule(
            t0=self.t0,
            ratio=self.ratio,
            tolerance=self.delta,
            max_loops=self.max_loops,
            loop_c=self.loop_c,
            max_step=self.max_step,
            count_infeasible=self.count_infeasible,
            rng_seed=rng_seed,
        )


# ------------------------------------------------------------------------------
# Loading
# ------------------------------------------------------------------------------
def read_config_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    values = dotenv_values(path)
    return {key.strip().lower(): value for key, value in values.items() if value is not None}


def load_run_config(path: str | Path | None = None, **overrides: Any) -> RunConfig:
    """Merge file values with non-None overrides (overrides win)."""
    values: dict[str, Any] = read_config_file(path) if path else {}
    values.update({key: value for key, value in overrides.items() if value is not None})
    try:
        config = RunConfig(**values)
    except ValidationError as exc:
        raise InputError(f"invalid configuration: {exc}") from exc
    logger.debug("Run configuration: %s", config.model_dump())
    return config

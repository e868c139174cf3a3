"""Runtime settings read from the environment."""

import os

from pydantic import BaseModel, Field

from .errors import ConfigError


class RuntimeSettings(BaseModel):
    """Process-wide knobs that are not part of a scenario."""

    threads: int = Field(default=1, ge=1, description="Worker cap for scenario batches")
    max_cells: int = Field(default=2048 * 2048, gt=0, description="Largest admissible nx*ny")
    exact_distance_max_cells: int = Field(
        default=512 * 512, gt=0, description="Grids up to this size use exact distance fields"
    )


def _int_env(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"expected an integer, got {raw!r}", key_path=name) from e


def load_settings() -> RuntimeSettings:
    """Build settings from WULFF_THREADS, WULFF_MAX_CELLS, WULFF_EXACT_DISTANCE_MAX_CELLS."""
    return RuntimeSettings(
        threads=max(1, _int_env("WULFF_THREADS", os.cpu_count() or 1)),
        max_cells=_int_env("WULFF_MAX_CELLS", 2048 * 2048),
        exact_distance_max_cells=_int_env("WULFF_EXACT_DISTANCE_MAX_CELLS", 512 * 512),
    )

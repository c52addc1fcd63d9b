"""Application configuration."""

import math
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.errors import ConfigError, ParseError

COMMANDS = (
    "analyze",
    "dissipation",
    "dynamo",
    "simulate",
    "mincurve",
    "classify-affine",
    "degeneracy-check",
)


class Settings(BaseSettings):
    """Application settings loaded from environment variables (prefix TORUSLAB_)."""

    model_config = SettingsConfigDict(
        env_prefix="TORUSLAB_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    # Parallelism
    threads: int = 4

    # Lattice enumeration
    node_budget: int = 100_000_000
    oracle_radius_cap: int = 50
    oracle_radius_cap_high_dim: int = 10
    degenerate_search_radius: int = 12

    # Spectral tolerances
    degeneracy_tolerance: float = 1e-10
    rank_cutoff: float = 1e-8
    eigenvector_condition_bound: float = 1e8
    relation_height: int = 1_000_000
    eigen_precision_digits: int = 60

    # Scans
    peak_window: int = 5
    scan_cap: int = 20_000
    coarse_scan_cap: int = 100_000
    max_dissipation_steps: int = 10**12

    # Simulator
    default_cutoff_2d: int = 64
    default_cutoff_3d: int = 16
    power_iterations: int = 1000

    # Sweeps
    default_eps_grid: str = "1e-2:1e-9:8"
    fit_points: int = 5


_overrides: dict[str, Any] = {}


def get_settings() -> Settings:
    """Get application settings, with any active overrides applied."""
    return Settings(**_overrides)


@contextmanager
def override_settings(**values: Any) -> Iterator[None]:
    """Temporarily override settings fields for every thread of the process."""
    saved = dict(_overrides)
    _overrides.update(values)
    try:
        yield
    finally:
        _overrides.clear()
        _overrides.update(saved)


def parse_eps_grid(text: str) -> list[float]:
    """
    Parse a geometric grid description "start:stop:points".

    Args:
        text: Grid text, e.g. "1e-3:1e-9:7"

    Returns:
        Strictly decreasing list of epsilons, geometric between start and stop

    Raises:
        ParseError: If the text is malformed or the grid is not decreasing
    """
    parts = text.split(":")
    if len(parts) != 3:
        raise ParseError(f"Grid must look like start:stop:points, got {text!r}")
    try:
        start, stop, points = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as e:
        raise ParseError(f"Invalid grid {text!r}: {e}") from e

    if points < 1 or start <= 0 or stop <= 0:
        raise ParseError(f"Grid needs positive bounds and at least one point: {text!r}")
    if points == 1:
        return [start]
    if stop >= start:
        raise ParseError(f"Grid must be strictly decreasing: {text!r}")

    ratio = math.log(stop / start) / (points - 1)
    grid = [start * math.exp(ratio * i) for i in range(points)]
    grid[-1] = stop
    return grid


class RunConfig(BaseModel):
    """Validated parameters of one CLI invocation."""

    model_config = ConfigDict(frozen=True)

    command: str
    matrix: str
    shift: str | None = None
    alpha: float = 1.0
    epsilon: float | None = None
    eps_grid: list[float] | None = None
    eta: float = math.exp(-1.0)
    coarse: bool = False
    degeneracy: str | None = None
    cutoff: int | None = None
    n_max: int = 40
    out: Path | None = None
    budget: int | None = None

    @field_validator("command")
    @classmethod
    def _known_command(cls, value: str) -> str:
        if value not in COMMANDS:
            raise ValueError(f"unknown command {value!r}")
        return value

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, value: float) -> float:
        if not 0 < value <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        return value

    @field_validator("eta")
    @classmethod
    def _eta_range(cls, value: float) -> float:
        if not 0 < value < 1:
            raise ValueError("eta must lie in (0, 1)")
        return value

    @field_validator("epsilon")
    @classmethod
    def _epsilon_range(cls, value: float | None) -> float | None:
        if value is not None and value < 0:
            raise ValueError("epsilon must be nonnegative")
        return value

    @field_validator("eps_grid")
    @classmethod
    def _grid_decreasing(cls, value: list[float] | None) -> list[float] | None:
        if value is None:
            return value
        if any(e <= 0 for e in value):
            raise ValueError("grid epsilons must be positive")
        if any(b >= a for a, b in zip(value, value[1:], strict=False)):
            raise ValueError("eps grid must be strictly decreasing")
        return value

    @field_validator("cutoff", "n_max", "budget")
    @classmethod
    def _positive(cls, value: int | None) -> int | None:
        if value is not None and value < 1:
            raise ValueError("must be a positive integer")
        return value

    @model_validator(mode="after")
    def _epsilon_or_grid(self) -> "RunConfig":
        if self.epsilon is not None and self.eps_grid is not None:
            raise ValueError("give either --eps or --eps-grid, not both")
        return self

    @classmethod
    def build(cls, **values: object) -> "RunConfig":
        """
        Validate CLI values, converting pydantic failures into ConfigError.

        Args:
            **values: Field values collected by the CLI

        Returns:
            Validated RunConfig

        Raises:
            ConfigError: If any field is outside its documented range
        """
        try:
            return cls.model_validate(values)
        except ValueError as e:
            raise ConfigError(str(e)) from e

"""Solver configuration."""

from __future__ import annotations

from functools import lru_cache
from typing import Annotated, Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class SolverConfig(BaseSettings):
    """Solver configuration.

    Settings are read from the environment (prefix `PPDE_`) and an optional local `.env` file.
    """

    model_config = SettingsConfigDict(env_prefix="ppde_", env_file=".env", extra="ignore")

    debug: Annotated[bool, Field(description="Enable debug mode (debug logging).")] = False

    log_level: Annotated[
        Literal["DEBUG", "INFO", "WARNING", "ERROR"],
        Field(description="Log level used by the command line interface."),
    ] = "WARNING"

    threads: Annotated[
        int,
        Field(
            description=(
                "Maximum number of worker threads for subtree evaluation and Monte-Carlo sampling."
            ),
            ge=1,
        ),
    ] = 1

    node_budget: Annotated[
        int,
        Field(
            description="Maximum number of tree nodes a single backward recursion may evaluate.",
            ge=1,
        ),
    ] = 10**8

    quad_order: Annotated[
        int,
        Field(description="Default Gauss-Hermite quadrature order for the Gaussian stencils.", ge=1),
    ] = 5

    quad_order_cap: Annotated[
        int,
        Field(description="Largest accepted Gauss-Hermite quadrature order.", ge=1),
    ] = 64

    memo_key_decimals: Annotated[
        int,
        Field(
            description=(
                "Number of decimals path statistics are rounded to when building memoization keys."
            ),
            ge=1,
            le=17,
        ),
    ] = 13

    mc_chunk_size: Annotated[
        int,
        Field(description="Number of Monte-Carlo samples simulated per chunk.", ge=1),
    ] = 100_000


# The configuration is an LRU-cached function to avoid re-reading the environment variables
# on every access, and to avoid initializing it as a side effect of importing the package.
@lru_cache
def get_config() -> SolverConfig:
    """Get the solver configuration."""
    return SolverConfig()

"""Configuration and fixtures for all pytest tests."""

from __future__ import annotations

from typing import TYPE_CHECKING

import pytest

if TYPE_CHECKING:
    from collections.abc import Iterator
    from typing import Any, Protocol

    from ppde_schemes.paths import TimeGrid
    from ppde_schemes.scheme import ProblemSpec
    from ppde_schemes.stencils import SchemeParams

    class ProblemFixture(Protocol):
        """Protocol for the problem fixture."""

        def __call__(
            self,
            generator: str,
            terminal: str,
            *,
            dim: int = 1,
            horizon: float = 1.0,
            steps: int = 1,
            generator_parameters: dict[str, Any] | None = None,
            terminal_parameters: dict[str, Any] | None = None,
        ) -> ProblemSpec: ...

    class ParamsFixture(Protocol):
        """Protocol for the params fixture."""

        def __call__(
            self,
            dim: int = 1,
            mu: float = 1.0,
            sigma: float = 1.0,
            quad_order: int = 5,
            epsilon0: float = 0.1,
        ) -> SchemeParams: ...


## Pytest configuration functions and hooks ##


def pytest_addoption(parser: pytest.Parser) -> None:
    """Add the command line option to run the slow tests."""
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="Run the slow tests (large Monte-Carlo samples, long convergence studies).",
    )


def pytest_configure(config: pytest.Config) -> None:
    """Configure pytest."""
    # Add extra markers
    config.addinivalue_line(
        "markers",
        "slow: mark test as slow to run, it is only run with the '--runslow' option",
    )


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    """Called after collection has been performed. May filter or re-order the items
    in-place."""
    if config.getoption("--runslow"):
        return

    skip_slow = pytest.mark.skip(reason="Slow test: use '--runslow' to run it")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


## Fixtures ##


@pytest.fixture(autouse=True)
def _reset_config(monkeypatch: pytest.MonkeyPatch) -> Iterator[None]:
    """Start every test from the default configuration, and drop the cached one afterwards.

    `PPDE_` variables are cleared and a `.env` file in the working directory is ignored.
    """
    from ppde_schemes.config import SolverConfig, get_config

    monkeypatch.setitem(SolverConfig.model_config, "env_file", None)

    for variable in (
        "PPDE_THREADS",
        "PPDE_NODE_BUDGET",
        "PPDE_QUAD_ORDER",
        "PPDE_QUAD_ORDER_CAP",
        "PPDE_MC_CHUNK_SIZE",
        "PPDE_MEMO_KEY_DECIMALS",
        "PPDE_LOG_LEVEL",
        "PPDE_DEBUG",
    ):
        monkeypatch.delenv(variable, raising=False)

    get_config.cache_clear()
    yield
    get_config.cache_clear()


@pytest.fixture
def grid() -> TimeGrid:
    """A grid on [0, 1] with 4 steps."""
    from ppde_schemes.paths import make_grid

    return make_grid(1.0, 4)


@pytest.fixture
def problem() -> ProblemFixture:
    """Build a problem from registry names."""
    from ppde_schemes.scheme import ProblemSpec

    return ProblemSpec.create


@pytest.fixture
def params() -> ParamsFixture:
    """Build equal scheme parameters in every coordinate."""
    from ppde_schemes.stencils import SchemeParams

    def _params(
        dim: int = 1,
        mu: float = 1.0,
        sigma: float = 1.0,
        quad_order: int = 5,
        epsilon0: float = 0.1,
    ) -> SchemeParams:
        return SchemeParams.uniform(dim, mu=mu, sigma=sigma, quad_order=quad_order, epsilon0=epsilon0)

    return _params


@pytest.fixture
def write_config(tmp_path: Any) -> Any:
    """Write a run configuration to a JSON file and return its path."""
    import json

    def _write_config(document: dict[str, Any], name: str = "config.json") -> str:
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return str(path)

    return _write_config

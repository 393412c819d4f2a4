"""Generic terminal condition class `g(omega)`."""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Annotated, ClassVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ppde_schemes.functionals.generator import FunctionalError
from ppde_schemes.models import StrEnum
from ppde_schemes.paths import DiscretePath

if TYPE_CHECKING:  # pragma: no cover
    from typing import Any

    from numpy.typing import NDArray

    from ppde_schemes.paths import TimeGrid


LOGGER = logging.getLogger(__name__)


class PathStatistic(StrEnum):
    """The smallest path statistic a terminal condition is a function of."""

    NONE = "none"
    CURRENT = "current"
    RUNNING_SUM = "running-sum"
    RUNNING_MAX = "running-max"
    FULL = "full"


# Data models
class TerminalParameters(BaseModel):
    """Parameters for a terminal condition."""

    model_config = ConfigDict(frozen=True, extra="forbid")


class CoordinateParameters(TerminalParameters):
    """Parameters for terminals reading a single coordinate."""

    index: Annotated[int, Field(description="The coordinate the terminal reads.", ge=0)] = 0


# Terminal class
class Terminal(ABC):
    """Interface/ABC for a terminal condition `g`, bounded on bounded sets and Lipschitz
    (at least locally) in the skeleton sup-norm."""

    name: ClassVar[str] = "terminal"
    statistic: ClassVar[PathStatistic] = PathStatistic.FULL

    _parameters_model: type[TerminalParameters] = TerminalParameters
    _parameters: TerminalParameters

    def __init__(self, parameters: TerminalParameters | dict[str, Any] | None = None) -> None:
        if isinstance(parameters, dict):
            parameters = self._parameters_model(**parameters)

        self._parameters = parameters or self._parameters_model()

    # Standard magic methods
    def __repr__(self) -> str:
        return f"<{self}>"

    def __str__(self) -> str:
        return f"{self.name}({self._parameters!r})"

    @property
    def parameters(self) -> TerminalParameters:
        """The terminal parameters."""
        return self._parameters

    def check_dimension(self, dim: int) -> None:
        """Raise unless the terminal can be evaluated on `dim`-dimensional paths."""
        index = getattr(self._parameters, "index", None)
        if index is not None and index >= dim:
            raise FunctionalError(f"Terminal {self} reads coordinate {index} of a {dim}-dimensional path")

    @abstractmethod
    def lipschitz_constant(self, radius: float = math.inf) -> float:  # pragma: no cover
        """Lipschitz constant in the skeleton sup-norm on the ball of the given radius."""
        raise NotImplementedError

    @abstractmethod
    def _evaluate(self, path: DiscretePath) -> float:  # pragma: no cover
        """Evaluate `g` on a terminal path."""
        raise NotImplementedError

    def evaluate(self, path: DiscretePath) -> float:
        """Evaluate `g(omega)` on a path defined up to the horizon."""
        if not path.is_terminal:
            raise FunctionalError(
                f"Terminal condition needs a path up to index {path.grid.steps}, "
                f"got one up to {path.defined_upto}"
            )
        self.check_dimension(path.dim)
        return float(self._evaluate(path))

    def _evaluate_batch(self, grid: TimeGrid, values: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate `g` on a stack of terminal skeletons. Override with a vectorized version."""
        return np.fromiter(
            (self._evaluate(DiscretePath(grid, skeleton)) for skeleton in values),
            dtype=np.float64,
            count=values.shape[0],
        )

    def evaluate_batch(self, grid: TimeGrid, values: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate `g` on skeletons of shape `(samples, n + 1, d)`."""
        if values.ndim != 3 or values.shape[1] != grid.steps + 1:
            raise FunctionalError(
                f"Expected skeletons of shape (samples, {grid.steps + 1}, d), got {values.shape}"
            )
        self.check_dimension(values.shape[2])
        return np.asarray(self._evaluate_batch(grid, values), dtype=np.float64)


def eval_terminal(terminal: Terminal, path: DiscretePath) -> float:
    """Evaluate `u^h(t_n, omega) = g(omega)`."""
    return terminal.evaluate(path)

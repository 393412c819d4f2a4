"""Registered terminal conditions.

Path-dependent terminals use discrete monitoring on the grid: the average is
`(1/n) sum_{j=1}^n omega_{t_j}` and the maximum runs over `j = 0..n`.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Annotated

import numpy as np
from pydantic import Field

from ppde_schemes.functionals.terminal import (
    CoordinateParameters,
    PathStatistic,
    Terminal,
    TerminalParameters,
)

if TYPE_CHECKING:  # pragma: no cover
    from numpy.typing import NDArray

    from ppde_schemes.paths import DiscretePath, TimeGrid


class ConstantParameters(TerminalParameters):
    """Parameters for the constant terminal."""

    value: Annotated[float, Field(description="The constant terminal value.")] = 1.0


class ConstantTerminal(Terminal):
    """`g = c`."""

    name = "constant"
    statistic = PathStatistic.NONE

    _parameters_model = ConstantParameters
    _parameters: ConstantParameters

    def lipschitz_constant(self, radius: float = math.inf) -> float:  # noqa: ARG002
        return 0.0

    def _evaluate(self, path: DiscretePath) -> float:  # noqa: ARG002
        return self._parameters.value

    def _evaluate_batch(
        self, grid: TimeGrid, values: NDArray[np.float64]  # noqa: ARG002
    ) -> NDArray[np.float64]:
        return np.full(values.shape[0], self._parameters.value)


class CoordinateTerminal(Terminal):
    """`g = omega_T^c`."""

    name = "coordinate"
    statistic = PathStatistic.CURRENT

    _parameters_model = CoordinateParameters
    _parameters: CoordinateParameters

    def lipschitz_constant(self, radius: float = math.inf) -> float:  # noqa: ARG002
        return 1.0

    def _evaluate(self, path: DiscretePath) -> float:
        return float(path.current[self._parameters.index])

    def _evaluate_batch(
        self, grid: TimeGrid, values: NDArray[np.float64]  # noqa: ARG002
    ) -> NDArray[np.float64]:
        return values[:, -1, self._parameters.index]


class SquareParameters(CoordinateParameters):
    """Parameters for the square terminal."""

    scale: Annotated[float, Field(description="Multiplier s in g = s * x^2.")] = 1.0


class SquareTerminal(Terminal):
    """`g = s (omega_T^c)^2`, Lipschitz on bounded sets only."""

    name = "square"
    statistic = PathStatistic.CURRENT

    _parameters_model = SquareParameters
    _parameters: SquareParameters

    def lipschitz_constant(self, radius: float = math.inf) -> float:
        return 2.0 * abs(self._parameters.scale) * radius

    def _evaluate(self, path: DiscretePath) -> float:
        return self._parameters.scale * float(path.current[self._parameters.index]) ** 2

    def _evaluate_batch(
        self, grid: TimeGrid, values: NDArray[np.float64]  # noqa: ARG002
    ) -> NDArray[np.float64]:
        return self._parameters.scale * values[:, -1, self._parameters.index] ** 2


class AverageTerminal(Terminal):
    """`g = (1/n) sum_{j=1}^n omega_{t_j}^c`, an Asian-style average."""

    name = "average"
    statistic = PathStatistic.RUNNING_SUM

    _parameters_model = CoordinateParameters
    _parameters: CoordinateParameters

    def lipschitz_constant(self, radius: float = math.inf) -> float:  # noqa: ARG002
        return 1.0

    def _evaluate(self, path: DiscretePath) -> float:
        return float(np.mean(path.values[1:, self._parameters.index]))

    def _evaluate_batch(
        self, grid: TimeGrid, values: NDArray[np.float64]  # noqa: ARG002
    ) -> NDArray[np.float64]:
        return np.mean(values[:, 1:, self._parameters.index], axis=1)


class MaxParameters(CoordinateParameters):
    """Parameters for the running-maximum terminal."""

    absolute: Annotated[
        bool, Field(description="Take the maximum of |omega^c| rather than of omega^c.")
    ] = False


class MaxTerminal(Terminal):
    """`g = max_{0<=j<=n} omega_{t_j}^c` (or of its absolute value), a lookback payoff."""

    name = "max"
    statistic = PathStatistic.RUNNING_MAX

    _parameters_model = MaxParameters
    _parameters: MaxParameters

    def lipschitz_constant(self, radius: float = math.inf) -> float:  # noqa: ARG002
        return 1.0

    def _evaluate(self, path: DiscretePath) -> float:
        coordinate = path.values[:, self._parameters.index]
        if self._parameters.absolute:
            coordinate = np.abs(coordinate)
        return float(np.max(coordinate))

    def _evaluate_batch(
        self, grid: TimeGrid, values: NDArray[np.float64]  # noqa: ARG002
    ) -> NDArray[np.float64]:
        coordinate = values[:, :, self._parameters.index]
        if self._parameters.absolute:
            coordinate = np.abs(coordinate)
        return np.max(coordinate, axis=1)


class CallParameters(CoordinateParameters):
    """Parameters for the call terminal."""

    strike: Annotated[float, Field(description="Strike K.")] = 0.0


class CallTerminal(Terminal):
    """`g = max(omega_T^c - K, 0)`."""

    name = "call"
    statistic = PathStatistic.CURRENT

    _parameters_model = CallParameters
    _parameters: CallParameters

    def lipschitz_constant(self, radius: float = math.inf) -> float:  # noqa: ARG002
        return 1.0

    def _evaluate(self, path: DiscretePath) -> float:
        return max(float(path.current[self._parameters.index]) - self._parameters.strike, 0.0)

    def _evaluate_batch(
        self, grid: TimeGrid, values: NDArray[np.float64]  # noqa: ARG002
    ) -> NDArray[np.float64]:
        return np.maximum(values[:, -1, self._parameters.index] - self._parameters.strike, 0.0)

"""Generic generator class for the nonlinearity `G(t, omega, y, z, gamma)`."""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING, ClassVar

import numpy as np
from pydantic import BaseModel, ConfigDict

from ppde_schemes.models import PPDEError

if TYPE_CHECKING:  # pragma: no cover
    from typing import Any

    from numpy.typing import ArrayLike, NDArray

    from ppde_schemes.paths import DiscretePath


LOGGER = logging.getLogger(__name__)

FD_BASE_STEP = np.finfo(np.float64).eps ** (1 / 3)
"""Central-difference step before scaling, the cube root of machine epsilon."""


# Exceptions
class FunctionalError(PPDEError, ValueError):
    """Invalid input to a terminal condition, generator or test functional."""


# Data models
class GeneratorParameters(BaseModel):
    """Parameters for a generator."""

    model_config = ConfigDict(frozen=True, extra="forbid")


@dataclass(frozen=True)
class DerivativeBundle:
    """Partial derivatives of `G` in `(y, z, gamma)` at an evaluation point."""

    dy: float
    dz: NDArray[np.float64]
    dgamma: NDArray[np.float64]
    time: float
    y: float
    z: NDArray[np.float64]
    gamma: NDArray[np.float64]
    method: str
    notes: tuple[str, ...] = ()

    @property
    def dim(self) -> int:
        """Dimension `d`."""
        return self.dz.shape[0]


# Generator class
class Generator(ABC):
    """Interface/ABC for a generator `G`.

    Implementations must be nondecreasing in `gamma` (parabolicity) and have `G(t, omega, 0, 0, 0)`
    bounded.
    """

    name: ClassVar[str] = "generator"
    path_dependent: ClassVar[bool] = False
    """Whether `G` reads the path (beyond the time). All shipped generators do not."""

    _parameters_model: type[GeneratorParameters] = GeneratorParameters
    _parameters: GeneratorParameters

    def __init__(
        self,
        dim: int = 1,
        parameters: GeneratorParameters | dict[str, Any] | None = None,
    ) -> None:
        if dim < 1:
            raise FunctionalError(f"Generator dimension must be positive, got {dim}")
        self._dim = dim

        if isinstance(parameters, dict):
            parameters = self._parameters_model(**parameters)

        self._parameters = parameters or self._parameters_model()
        self._validate_parameters()

    def _validate_parameters(self) -> None:  # noqa: B027
        """Check the parameters against the dimension. Override when needed."""

    # Standard magic methods
    def __repr__(self) -> str:
        return f"<{self}>"

    def __str__(self) -> str:
        return f"{self.name}(dim={self._dim}, {self._parameters!r})"

    @property
    def dim(self) -> int:
        """Dimension `d` of the state."""
        return self._dim

    @property
    def parameters(self) -> GeneratorParameters:
        """The generator parameters."""
        return self._parameters

    @property
    @abstractmethod
    def lipschitz_constant(self) -> float:  # pragma: no cover
        """The Lipschitz constant `L0` of `G` in `(z, gamma)` (entrywise l1 norms)."""
        raise NotImplementedError

    @property
    def claims_monotone_derivatives(self) -> bool:
        """Whether `dG/dz_i >= 0` and `dG/dgamma_ij >= 0` hold everywhere."""
        return True

    @abstractmethod
    def _evaluate(
        self,
        time: float,
        path: DiscretePath,
        y: float,
        z: NDArray[np.float64],
        gamma: NDArray[np.float64],
    ) -> float:  # pragma: no cover
        """Evaluate `G` on validated arguments."""
        raise NotImplementedError

    def analytic_derivatives(
        self,
        time: float,  # noqa: ARG002
        path: DiscretePath,  # noqa: ARG002
        y: float,  # noqa: ARG002
        z: NDArray[np.float64],  # noqa: ARG002
        gamma: NDArray[np.float64],  # noqa: ARG002
    ) -> DerivativeBundle | None:
        """Return the analytic derivative bundle, or `None` if not available."""
        return None

    def evaluate(
        self,
        time: float,
        path: DiscretePath,
        y: float,
        z: ArrayLike,
        gamma: ArrayLike,
    ) -> float:
        """Evaluate `G(t, omega, y, z, gamma)`."""
        z, gamma = self._check_arguments(z, gamma)
        return float(self._evaluate(time, path, float(y), z, gamma))

    def _check_arguments(
        self, z: ArrayLike, gamma: ArrayLike
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        gamma = np.asarray(gamma, dtype=np.float64).reshape(self._dim, self._dim)
        if z.shape[0] != self._dim:
            raise FunctionalError(f"z has dimension {z.shape[0]}, expected {self._dim}")
        if not np.array_equal(gamma, gamma.T):
            raise FunctionalError("gamma must be symmetric; symmetrize before evaluating the generator")
        return z, gamma

    def derivatives(
        self,
        time: float,
        path: DiscretePath,
        y: float,
        z: ArrayLike,
        gamma: ArrayLike,
        *,
        force_numeric: bool = False,
        step: float | None = None,
    ) -> DerivativeBundle:
        """Derivative bundle at a point, analytic when available, else central differences."""
        z, gamma = self._check_arguments(z, gamma)
        y = float(y)

        if not force_numeric:
            bundle = self.analytic_derivatives(time, path, y, z, gamma)
            if bundle is not None:
                return bundle

        return self._central_differences(time, path, y, z, gamma, step)

    def _central_differences(
        self,
        time: float,
        path: DiscretePath,
        y: float,
        z: NDArray[np.float64],
        gamma: NDArray[np.float64],
        step: float | None,
    ) -> DerivativeBundle:
        """Symmetric central differences in every argument.

        Off-diagonal gamma entries are perturbed symmetrically, `gamma +- s (e_ij + e_ji) / 2`,
        which measures `dG/dgamma_ij` for the symmetric convention `dG/dgamma_ij = dG/dgamma_ji`.
        """
        d = self._dim

        def g(y_: float, z_: NDArray[np.float64], gamma_: NDArray[np.float64]) -> float:
            return float(self._evaluate(time, path, y_, z_, gamma_))

        delta_y = step if step is not None else FD_BASE_STEP * max(1.0, abs(y))
        dy = (g(y + delta_y, z, gamma) - g(y - delta_y, z, gamma)) / (2 * delta_y)

        dz = np.zeros(d)
        for i in range(d):
            delta = step if step is not None else FD_BASE_STEP * max(1.0, abs(z[i]))
            shift = np.zeros(d)
            shift[i] = delta
            dz[i] = (g(y, z + shift, gamma) - g(y, z - shift, gamma)) / (2 * delta)

        delta_gamma = step if step is not None else FD_BASE_STEP * max(1.0, float(np.max(np.abs(gamma))))
        dgamma = np.zeros((d, d))
        for i in range(d):
            for j in range(i, d):
                shift = np.zeros((d, d))
                shift[i, j] += delta_gamma / 2
                shift[j, i] += delta_gamma / 2
                dgamma[i, j] = dgamma[j, i] = (g(y, z, gamma + shift) - g(y, z, gamma - shift)) / (
                    2 * delta_gamma
                )

        return DerivativeBundle(
            dy=float(dy),
            dz=dz,
            dgamma=dgamma,
            time=time,
            y=y,
            z=z,
            gamma=gamma,
            method=f"central-difference({delta_gamma:.3g})",
        )


def _time_of(index: int, path: DiscretePath) -> float:
    if not 0 <= index <= path.defined_upto:
        raise FunctionalError(f"Index {index} out of range, path is defined up to {path.defined_upto}")
    return path.grid.node(index)


def eval_generator(
    generator: Generator,
    index: int,
    path: DiscretePath,
    y: float,
    z: ArrayLike,
    gamma: ArrayLike,
) -> float:
    """Evaluate `G(t_i, omega, y, z, gamma)`."""
    value = generator.evaluate(_time_of(index, path), path.prefix(index), y, z, gamma)
    if not math.isfinite(value):
        raise FunctionalError(f"Generator {generator} returned a non-finite value {value}")
    return value


def generator_derivs(
    generator: Generator,
    index: int,
    path: DiscretePath,
    y: float,
    z: ArrayLike,
    gamma: ArrayLike,
    *,
    force_numeric: bool = False,
    step: float | None = None,
) -> DerivativeBundle:
    """Derivative bundle of `G` at `(t_i, omega, y, z, gamma)`."""
    return generator.derivatives(
        _time_of(index, path),
        path.prefix(index),
        y,
        z,
        gamma,
        force_numeric=force_numeric,
        step=step,
    )

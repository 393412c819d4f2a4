"""Registered generators."""

from __future__ import annotations

from typing import TYPE_CHECKING, Annotated

import numpy as np
from pydantic import Field, model_validator

from ppde_schemes.functionals.generator import (
    DerivativeBundle,
    FunctionalError,
    Generator,
    GeneratorParameters,
)

if TYPE_CHECKING:  # pragma: no cover
    from numpy.typing import NDArray

    from ppde_schemes.paths import DiscretePath


class HeatGenerator(Generator):
    """`G = 1/2 tr(gamma)`, the path-dependent heat equation (martingales)."""

    name = "heat"

    @property
    def lipschitz_constant(self) -> float:
        return 0.5 * self._dim

    def _evaluate(
        self,
        time: float,  # noqa: ARG002
        path: DiscretePath,  # noqa: ARG002
        y: float,  # noqa: ARG002
        z: NDArray[np.float64],  # noqa: ARG002
        gamma: NDArray[np.float64],
    ) -> float:
        return 0.5 * float(np.trace(gamma))

    def _bundle(
        self,
        time: float,
        y: float,
        z: NDArray[np.float64],
        gamma: NDArray[np.float64],
        dy: float = 0.0,
        dz: NDArray[np.float64] | None = None,
    ) -> DerivativeBundle:
        return DerivativeBundle(
            dy=dy,
            dz=np.zeros(self._dim) if dz is None else dz,
            dgamma=0.5 * np.eye(self._dim),
            time=time,
            y=y,
            z=z,
            gamma=gamma,
            method="analytic",
        )

    def analytic_derivatives(
        self,
        time: float,
        path: DiscretePath,  # noqa: ARG002
        y: float,
        z: NDArray[np.float64],
        gamma: NDArray[np.float64],
    ) -> DerivativeBundle:
        return self._bundle(time, y, z, gamma)


class SemilinearParameters(GeneratorParameters):
    """Parameters for the semilinear generator."""

    lam: Annotated[float, Field(description="Coefficient of the linear term in y.")] = 0.0


class SemilinearGenerator(HeatGenerator):
    """`G = 1/2 tr(gamma) + lam * y`, a linear BSDE driver.

    The solution is `E[g(omega + W)] * exp(lam (T - t))`.
    """

    name = "semilinear-linear-y"

    _parameters_model = SemilinearParameters
    _parameters: SemilinearParameters

    def _evaluate(
        self,
        time: float,
        path: DiscretePath,
        y: float,
        z: NDArray[np.float64],
        gamma: NDArray[np.float64],
    ) -> float:
        return super()._evaluate(time, path, y, z, gamma) + self._parameters.lam * y

    def analytic_derivatives(
        self,
        time: float,
        path: DiscretePath,  # noqa: ARG002
        y: float,
        z: NDArray[np.float64],
        gamma: NDArray[np.float64],
    ) -> DerivativeBundle:
        return self._bundle(time, y, z, gamma, dy=self._parameters.lam)


class DriftParameters(GeneratorParameters):
    """Parameters for the drift generator."""

    drift: Annotated[
        tuple[float, ...],
        Field(description="Drift vector b, one nonnegative entry per dimension."),
    ] = (0.0,)

    @model_validator(mode="after")
    def _nonnegative(self) -> DriftParameters:
        if any(b < 0 for b in self.drift):
            raise ValueError("drift entries must be nonnegative (dG/dz_i >= 0)")
        return self


class DriftGenerator(HeatGenerator):
    """`G = 1/2 tr(gamma) + b . z`, Brownian motion with a constant drift `b`."""

    name = "drift"

    _parameters_model = DriftParameters
    _parameters: DriftParameters

    def _validate_parameters(self) -> None:
        if len(self._parameters.drift) != self._dim:
            raise FunctionalError(
                f"Drift has {len(self._parameters.drift)} entries, expected dimension {self._dim}"
            )

    @property
    def drift(self) -> NDArray[np.float64]:
        """The drift vector `b`."""
        return np.asarray(self._parameters.drift, dtype=np.float64)

    @property
    def lipschitz_constant(self) -> float:
        return 0.5 * self._dim + float(np.sum(self.drift))

    def _evaluate(
        self,
        time: float,
        path: DiscretePath,
        y: float,
        z: NDArray[np.float64],
        gamma: NDArray[np.float64],
    ) -> float:
        return super()._evaluate(time, path, y, z, gamma) + float(self.drift @ z)

    def analytic_derivatives(
        self,
        time: float,
        path: DiscretePath,  # noqa: ARG002
        y: float,
        z: NDArray[np.float64],
        gamma: NDArray[np.float64],
    ) -> DerivativeBundle:
        return self._bundle(time, y, z, gamma, dz=self.drift.copy())


class GHeatParameters(GeneratorParameters):
    """Parameters for the G-heat generator."""

    sigma_low: Annotated[float, Field(description="Lower volatility bound.", ge=0)] = 0.5
    sigma_high: Annotated[float, Field(description="Upper volatility bound.", gt=0)] = 1.0

    @model_validator(mode="after")
    def _ordered(self) -> GHeatParameters:
        if self.sigma_low > self.sigma_high:
            raise ValueError("sigma_low must not exceed sigma_high")
        return self


class GHeatGenerator(Generator):
    """`G = 1/2 sum_i (sigma_high^2 gamma_ii^+ - sigma_low^2 gamma_ii^-)`, volatility uncertainty.

    In one dimension this is `1/2 sup_{sigma in [sigma_low, sigma_high]} sigma^2 gamma`. The
    derivative at the kink `gamma_ii = 0` is taken from the upper envelope, `sigma_high^2 / 2`.
    """

    name = "g-heat"

    _parameters_model = GHeatParameters
    _parameters: GHeatParameters

    @property
    def lipschitz_constant(self) -> float:
        return 0.5 * self._parameters.sigma_high**2 * self._dim

    def _evaluate(
        self,
        time: float,  # noqa: ARG002
        path: DiscretePath,  # noqa: ARG002
        y: float,  # noqa: ARG002
        z: NDArray[np.float64],  # noqa: ARG002
        gamma: NDArray[np.float64],
    ) -> float:
        diagonal = np.diag(gamma)
        upper = self._parameters.sigma_high**2 * np.maximum(diagonal, 0.0)
        lower = self._parameters.sigma_low**2 * np.maximum(-diagonal, 0.0)
        return 0.5 * float(np.sum(upper - lower))

    def analytic_derivatives(
        self,
        time: float,
        path: DiscretePath,  # noqa: ARG002
        y: float,
        z: NDArray[np.float64],
        gamma: NDArray[np.float64],
    ) -> DerivativeBundle:
        diagonal = np.diag(gamma)
        slopes = np.where(
            diagonal >= 0.0,
            0.5 * self._parameters.sigma_high**2,
            0.5 * self._parameters.sigma_low**2,
        )
        notes = ("kink at gamma_ii = 0: upper envelope derivative",) if np.any(diagonal == 0.0) else ()
        return DerivativeBundle(
            dy=0.0,
            dz=np.zeros(self._dim),
            dgamma=np.diag(slopes),
            time=time,
            y=y,
            z=z,
            gamma=gamma,
            method="analytic",
            notes=notes,
        )

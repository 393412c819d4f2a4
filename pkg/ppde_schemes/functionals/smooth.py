"""Smooth test functionals with known path derivatives.

Two kinds are supported, both built on `f = c * t^a * x_k^p`:

- `cylinder`: `phi(t, omega) = f(t, omega_t)`.
- `integral`: `phi(t, omega) = f(t, omega_t) + kappa * I_t`, where
  `I_{t_i} = h sum_{j=1}^{i} omega_{t_j}^k` is the discretely monitored running integral of the
  coordinate. Its time derivative is `omega_t^k`, its space derivatives vanish.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Annotated

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ppde_schemes.functionals.generator import FunctionalError
from ppde_schemes.models import StrEnum

if TYPE_CHECKING:  # pragma: no cover
    from numpy.typing import NDArray

    from ppde_schemes.paths import DiscretePath


class SmoothKind(StrEnum):
    """Kinds of smooth test functionals."""

    CYLINDER = "cylinder"
    INTEGRAL = "integral"


class SmoothFunctional(BaseModel):
    """A smooth test functional `phi(t, omega)`."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Annotated[SmoothKind, Field(description="Cylinder or running-integral functional.")] = (
        SmoothKind.CYLINDER
    )
    coefficient: Annotated[float, Field(description="Multiplier c of the polynomial part.")] = 1.0
    power: Annotated[int, Field(description="Power p of the coordinate.", ge=0)] = 1
    time_power: Annotated[int, Field(description="Power a of the time.", ge=0)] = 0
    index: Annotated[int, Field(description="The coordinate k the functional reads.", ge=0)] = 0
    integral_weight: Annotated[
        float, Field(description="Multiplier kappa of the running integral (integral kind only).")
    ] = 0.0

    @model_validator(mode="after")
    def _cylinder_has_no_integral(self) -> SmoothFunctional:
        if self.kind == SmoothKind.CYLINDER and self.integral_weight != 0.0:
            raise ValueError("cylinder functionals cannot carry a running integral term")
        return self


@dataclass(frozen=True)
class FunctionalValue:
    """Value and path derivatives of a test functional at `(t_i, omega)`."""

    value: float
    dt: float
    domega: NDArray[np.float64]
    domega2: NDArray[np.float64]


def running_integral(path: DiscretePath, index: int, coordinate: int = 0) -> float:
    """`h sum_{j=1}^{index} omega_{t_j}^k`."""
    return path.grid.step * float(np.sum(path.values[1 : index + 1, coordinate]))


def eval_test_functional(functional: SmoothFunctional, index: int, path: DiscretePath) -> FunctionalValue:
    """Value, `d_t`, `d_omega` and `d^2_omega` of the functional at `(t_i, omega)`."""
    if not 0 <= index <= path.defined_upto:
        raise FunctionalError(f"Index {index} out of range, path is defined up to {path.defined_upto}")
    if functional.index >= path.dim:
        raise FunctionalError(
            f"Functional reads coordinate {functional.index} of a {path.dim}-dimensional path"
        )

    k = functional.index
    t = path.grid.node(index)
    x = float(path.values[index, k])
    c, p, a = functional.coefficient, functional.power, functional.time_power

    time_factor = t**a
    value = c * time_factor * x**p
    dt = c * a * t ** (a - 1) * x**p if a >= 1 else 0.0

    domega = np.zeros(path.dim)
    domega2 = np.zeros((path.dim, path.dim))
    if p >= 1:
        domega[k] = c * time_factor * p * x ** (p - 1)
    if p >= 2:
        domega2[k, k] = c * time_factor * p * (p - 1) * x ** (p - 2)

    if functional.kind == SmoothKind.INTEGRAL:
        value += functional.integral_weight * running_integral(path, index, k)
        dt += functional.integral_weight * x

    return FunctionalValue(value=value, dt=dt, domega=domega, domega2=domega2)

"""Step measures as finite stencils.

Each step measure is realized by its one-step law of the endpoint increment:

- `P0`: no move.
- `P(i)`: deterministic move `mu_i h e_i`.
- `P(ii)`: coordinate `i` moves as a Brownian motion with volatility `sigma_i`.
- `P(ij)`, `i != j`: coordinates `i` and `j` move with volatilities `sigma_i`, `sigma_j`, driven by one
  shared Gaussian factor.

Gaussian expectations are computed with the `q`-point Gauss-Hermite rule for `N(0, 1)`, exact for
polynomials of degree up to `2q - 1`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Annotated

import numpy as np
from numpy.polynomial import hermite_e
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ppde_schemes.config import get_config
from ppde_schemes.models import PPDEError, StrEnum
from ppde_schemes.paths import concat

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Callable

    from numpy.typing import NDArray

    from ppde_schemes.paths import DiscretePath


LOGGER = logging.getLogger(__name__)


# Exceptions
class StencilError(PPDEError, ValueError):
    """Invalid stencil request."""


# Data models
class SchemeParams(BaseModel):
    """Scheme constants `mu_i > 0`, `sigma_i > 0`, quadrature order and monotonicity margin."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mu: Annotated[tuple[float, ...], Field(description="Drift stencil sizes mu_i > 0.", min_length=1)]
    sigma: Annotated[
        tuple[float, ...], Field(description="Gaussian stencil volatilities sigma_i > 0.", min_length=1)
    ]
    quad_order: Annotated[int, Field(description="Gauss-Hermite quadrature order q.", ge=1)] = 5
    epsilon0: Annotated[
        float, Field(description="Monotonicity margin epsilon_0 in (0, 1).", gt=0, lt=1)
    ] = 0.1

    @model_validator(mode="after")
    def _check(self) -> SchemeParams:
        if len(self.mu) != len(self.sigma):
            raise ValueError(f"mu has {len(self.mu)} entries but sigma has {len(self.sigma)}")
        if any(not (math.isfinite(mu) and mu > 0) for mu in self.mu):
            raise ValueError("all mu entries must be positive")
        if any(not (math.isfinite(sigma) and sigma > 0) for sigma in self.sigma):
            raise ValueError("all sigma entries must be positive")
        return self

    @classmethod
    def uniform(
        cls,
        dim: int,
        mu: float = 1.0,
        sigma: float = 1.0,
        quad_order: int | None = None,
        epsilon0: float = 0.1,
    ) -> SchemeParams:
        """Equal constants in every coordinate."""
        return cls(
            mu=(mu,) * dim,
            sigma=(sigma,) * dim,
            quad_order=quad_order or get_config().quad_order,
            epsilon0=epsilon0,
        )

    @property
    def dim(self) -> int:
        """Dimension `d`."""
        return len(self.mu)

    @property
    def mu_array(self) -> NDArray[np.float64]:
        """`mu` as an array."""
        return np.asarray(self.mu, dtype=np.float64)

    @property
    def sigma_array(self) -> NDArray[np.float64]:
        """`sigma` as an array."""
        return np.asarray(self.sigma, dtype=np.float64)


class MeasureKind(StrEnum):
    """The four step-measure families."""

    ZERO = "P0"
    DRIFT = "drift"
    DIAGONAL = "diagonal"
    CROSS = "cross"


@dataclass(frozen=True, order=True)
class MeasureId:
    """Identifier of a step measure; indices are 0-based, labels 1-based."""

    kind: MeasureKind
    i: int = -1
    j: int = -1

    def __str__(self) -> str:
        if self.kind == MeasureKind.ZERO:
            return "P0"
        if self.kind == MeasureKind.DRIFT:
            return f"P({self.i + 1})"
        if self.kind == MeasureKind.DIAGONAL:
            return f"P({self.i + 1}{self.i + 1})"
        return f"P({self.i + 1},{self.j + 1})"

    @classmethod
    def zero(cls) -> MeasureId:
        return cls(MeasureKind.ZERO)

    @classmethod
    def drift(cls, i: int) -> MeasureId:
        return cls(MeasureKind.DRIFT, i)

    @classmethod
    def diagonal(cls, i: int) -> MeasureId:
        return cls(MeasureKind.DIAGONAL, i, i)

    @classmethod
    def cross(cls, i: int, j: int) -> MeasureId:
        if i == j:
            raise StencilError(f"Cross measure needs distinct indices, got i = j = {i}")
        return cls(MeasureKind.CROSS, i, j)


@dataclass(frozen=True)
class Stencil:
    """Children `(w_k, Delta_k)` of a step measure: positive weights summing to one."""

    measure: MeasureId
    weights: NDArray[np.float64]
    increments: NDArray[np.float64]

    def __len__(self) -> int:
        return self.weights.shape[0]


def all_measures(dim: int) -> list[MeasureId]:
    """`P0`, the `d` drift measures, the `d` diagonal and the `d(d-1)` ordered cross measures."""
    measures = [MeasureId.zero()]
    measures.extend(MeasureId.drift(i) for i in range(dim))
    measures.extend(MeasureId.diagonal(i) for i in range(dim))
    measures.extend(MeasureId.cross(i, j) for i in range(dim) for j in range(dim) if i != j)
    return measures


@lru_cache(maxsize=128)
def _hermite_rule(order: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    nodes, weights = hermite_e.hermegauss(order)
    # Enforce exact symmetry about 0 and unit mass.
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    weights = weights / math.fsum(weights)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def hermite_rule(order: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Nodes and weights of the `order`-point Gauss-Hermite rule for the standard normal law."""
    cap = get_config().quad_order_cap
    if order < 1:
        raise StencilError(f"Quadrature order must be positive, got {order}")
    if order > cap:
        raise StencilError(f"Quadrature order {order} exceeds the cap of {cap}")
    return _hermite_rule(order)


@lru_cache(maxsize=4096)
def _step_children(measure: MeasureId, params: SchemeParams, step: float) -> Stencil:
    d = params.dim
    used = {
        MeasureKind.ZERO: (),
        MeasureKind.DRIFT: (measure.i,),
        MeasureKind.DIAGONAL: (measure.i,),
        MeasureKind.CROSS: (measure.i, measure.j),
    }[measure.kind]
    for index in used:
        if not 0 <= index < d:
            raise StencilError(f"Measure {measure} has an index outside 0..{d - 1}")

    if measure.kind in (MeasureKind.ZERO, MeasureKind.DRIFT):
        increments = np.zeros((1, d))
        if measure.kind == MeasureKind.DRIFT:
            increments[0, measure.i] = params.mu[measure.i] * step
        weights = np.ones(1)
    else:
        nodes, weights = hermite_rule(params.quad_order)
        weights = weights.copy()
        increments = np.zeros((nodes.shape[0], d))
        increments[:, measure.i] = params.sigma[measure.i] * math.sqrt(step) * nodes
        if measure.kind == MeasureKind.CROSS:
            increments[:, measure.j] = params.sigma[measure.j] * math.sqrt(step) * nodes

    weights.setflags(write=False)
    increments.setflags(write=False)
    return Stencil(measure=measure, weights=weights, increments=increments)


def step_children(measure: MeasureId, params: SchemeParams, step: float) -> Stencil:
    """The stencil of a step measure over a time step `h`."""
    if not (math.isfinite(step) and step > 0):
        raise StencilError(f"Time step must be positive, got {step}")
    if measure.kind == MeasureKind.CROSS and measure.i == measure.j:
        raise StencilError(f"Cross measure needs distinct indices, got i = j = {measure.i}")
    return _step_children(measure, params, float(step))


def step_expectation(
    measure: MeasureId,
    params: SchemeParams,
    step: float,
    index: int,
    path: DiscretePath,
    functional: Callable[[DiscretePath], float],
) -> float:
    """`E^P[phi] = sum_k w_k phi(omega (+) Delta_k)` for the path stopped at `t_i`.

    `functional` is called once per child; it must be safe to call concurrently.
    """
    if index >= path.grid.steps:
        raise StencilError(f"No step to take from the terminal index {index}")
    parent = path.prefix(index)
    stencil = step_children(measure, params, step)
    values = np.fromiter(
        (functional(concat(parent, increment)) for increment in stencil.increments),
        dtype=np.float64,
        count=len(stencil),
    )
    return float(stencil.weights @ values)

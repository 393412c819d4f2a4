"""Monotonicity audit of the scheme.

Linearizing the one-step operator around a point writes `T_h[phi_1] - T_h[phi_2]` as a mixture

    a_0 E^{P0}[psi] + sum_i a_i E^{P(i)}[psi] + sum_{i,j} a_ij E^{P(ij)}[psi],    psi = phi_1 - phi_2,

with weights summing to `1 + h dG/dy`. The scheme is monotone wherever every weight is nonnegative.
The audit evaluates the generator's derivatives on a sampled box of `(t, omega, y, z, gamma)` and
checks the sufficient conditions

    dG/dz_i >= 0,   dG/dgamma_ij >= 0,
    2 dG/dgamma_ii / sigma_i >= sum_{j != i} (dG/dgamma_ij + dG/dgamma_ji) / sigma_j,
    sum_i dG/dz_i / mu_i + sum_i 2 dG/dgamma_ii / sigma_i^2 - sum_{i != j} dG/dgamma_ij / (sigma_i sigma_j)
        <= 1 - epsilon_0.

The result certifies the sampled box only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Annotated, Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ppde_schemes.paths import make_grid, path_from_values
from ppde_schemes.scheme import SchemeError
from ppde_schemes.stencils import MeasureId, SchemeParams

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Iterator, Mapping

    from numpy.typing import NDArray

    from ppde_schemes.functionals.generator import DerivativeBundle, Generator


LOGGER = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-12
"""Weights above `-WEIGHT_TOLERANCE` count as nonnegative."""

SEARCH_CAP = 60
"""Maximum number of doublings in the parameter search."""


# Exceptions
class ParameterSearchError(SchemeError):
    """No passing scheme parameters were found within the search cap."""

    def __init__(self, message: str, report: MonotonicityReport) -> None:
        super().__init__(message)
        self.report = report


# Data models
@dataclass(frozen=True)
class StencilWeights:
    """The mixture weights `a_0`, `a_i`, `a_ii`, `a_ij` at one derivative bundle."""

    a0: float
    a_drift: NDArray[np.float64]
    a_diag: NDArray[np.float64]
    a_cross: NDArray[np.float64]
    dy: float
    step: float
    sum_residual: float

    @property
    def total(self) -> float:
        """`1 + h dG/dy`, the total mass of the weights."""
        return 1.0 + self.step * self.dy

    @property
    def minimum(self) -> float:
        """The smallest weight."""
        return float(
            min(
                self.a0,
                np.min(self.a_drift),
                np.min(self.a_diag),
                np.min(self.a_cross, initial=np.inf, where=~np.eye(self.a_cross.shape[0], dtype=bool)),
            )
        )

    def measure_weights(self) -> dict[MeasureId, float]:
        """The weight attached to every step measure."""
        d = self.a_drift.shape[0]
        weights = {MeasureId.zero(): self.a0}
        weights.update({MeasureId.drift(i): float(self.a_drift[i]) for i in range(d)})
        weights.update({MeasureId.diagonal(i): float(self.a_diag[i]) for i in range(d)})
        weights.update(
            {MeasureId.cross(i, j): float(self.a_cross[i, j]) for i in range(d) for j in range(d) if i != j}
        )
        return weights

    def mixture_expectation(self, expectations: Mapping[MeasureId, float]) -> float:
        """`sum_P a_P E^P[psi]`, which equals `(1 + h dG/dy) E^{P-hat}[psi]`."""
        return math.fsum(
            weight * expectations[measure] for measure, weight in self.measure_weights().items()
        )


def reweighted_measure(weights: StencilWeights) -> dict[MeasureId, float]:
    """The probability weights of the mixture measure `P-hat` (weights divided by their total)."""
    total = weights.total
    if total <= 0:
        raise SchemeError(f"Weights have nonpositive total mass {total}")
    return {measure: weight / total for measure, weight in weights.measure_weights().items()}


class SampleSpec(BaseModel):
    """A box of points `(t, omega, y, z, gamma)` the derivatives of `G` are audited on."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    count: Annotated[
        int, Field(description="Number of random points (the origin is always added).", ge=0)
    ] = 1000
    seed: Annotated[int, Field(description="Seed of the sampling generator.")] = 0
    horizon: Annotated[float, Field(description="Time horizon of the sampled paths.", gt=0)] = 1.0
    steps: Annotated[int, Field(description="Grid steps of the sampled paths.", ge=1)] = 4
    path_radius: Annotated[float, Field(description="Sampled skeleton values lie in [-r, r].", ge=0)] = 2.0
    y_range: Annotated[tuple[float, float], Field(description="Range of y.")] = (-2.0, 2.0)
    z_range: Annotated[tuple[float, float], Field(description="Range of every z entry.")] = (-2.0, 2.0)
    gamma_range: Annotated[
        tuple[float, float], Field(description="Range of every gamma entry (then symmetrized).")
    ] = (-2.0, 2.0)


class MonotonicityReport(BaseModel):
    """Outcome of the monotonicity audit over a sample."""

    params: SchemeParams
    step: float
    sample: SampleSpec
    points: int
    min_weights: Annotated[
        dict[str, float],
        Field(description="Smallest weight observed per family (a0, drift, diagonal, cross)."),
    ]
    slacks: Annotated[
        dict[str, float],
        Field(description="Smallest slack of each sufficient inequality; negative means violated."),
    ]
    condition_slack: Annotated[
        float,
        Field(description="Smallest value of (1 - epsilon0) minus the left side of the sum condition."),
    ]
    diagonal_dominance: Annotated[
        bool,
        Field(description="Whether 2 dG/dgamma_ii >= sum_{j!=i} (dG/dgamma_ij + dG/dgamma_ji) everywhere."),
    ]
    max_sum_residual: Annotated[float, Field(description="Largest |sum of weights - (1 + h dG/dy)|.")]
    lipschitz_constant: Annotated[float, Field(description="L0 of the generator (informational).")]
    verdict: Literal["PASS", "FAIL"]
    binding: Annotated[str | None, Field(description="The most violated condition on FAIL.")] = None
    witness: Annotated[dict[str, Any] | None, Field(description="A point where the verdict fails.")] = None
    notes: list[str] = []

    @property
    def passed(self) -> bool:
        """Whether the audit passed."""
        return self.verdict == "PASS"


def monotonicity_weights(bundle: DerivativeBundle, params: SchemeParams, step: float) -> StencilWeights:
    """The mixture weights at a derivative bundle."""
    if bundle.dim != params.dim:
        raise SchemeError(f"Derivative bundle has dimension {bundle.dim}, scheme parameters {params.dim}")

    mu, sigma = params.mu_array, params.sigma_array
    dz, dgamma = bundle.dz, bundle.dgamma
    sigma_outer = np.outer(sigma, sigma)
    off_diagonal = ~np.eye(params.dim, dtype=bool)

    a_drift = dz / mu
    a_cross = np.where(off_diagonal, dgamma / sigma_outer, 0.0)
    a_diag = 2 * np.diag(dgamma) / sigma**2 - np.sum(
        np.where(off_diagonal, (dgamma + dgamma.T) / sigma_outer, 0.0), axis=1
    )
    a0 = (
        1.0
        + step * bundle.dy
        - math.fsum(a_drift)
        - math.fsum(2 * np.diag(dgamma) / sigma**2)
        + math.fsum(a_cross.ravel())
    )

    total = math.fsum([a0, *a_drift, *a_diag, *a_cross.ravel()])
    return StencilWeights(
        a0=a0,
        a_drift=a_drift,
        a_diag=a_diag,
        a_cross=a_cross,
        dy=bundle.dy,
        step=step,
        sum_residual=total - (1.0 + step * bundle.dy),
    )


def _conditions(bundle: DerivativeBundle, params: SchemeParams) -> dict[str, float]:
    """Slack of each sufficient inequality at one bundle (nonnegative when satisfied)."""
    mu, sigma = params.mu_array, params.sigma_array
    dz, dgamma = bundle.dz, bundle.dgamma
    off_diagonal = ~np.eye(params.dim, dtype=bool)
    pair_sums = np.where(off_diagonal, dgamma + dgamma.T, 0.0)

    left = (
        math.fsum(dz / mu)
        + math.fsum(2 * np.diag(dgamma) / sigma**2)
        - math.fsum(np.where(off_diagonal, dgamma / np.outer(sigma, sigma), 0.0).ravel())
    )
    return {
        "dz_nonnegative": float(np.min(dz)),
        "dgamma_nonnegative": float(np.min(dgamma)),
        "diagonal_balance": float(
            np.min(2 * np.diag(dgamma) / sigma - (pair_sums / sigma[np.newaxis, :]).sum(axis=1))
        ),
        "sum_condition": (1.0 - params.epsilon0) - left,
        "diagonal_dominance": float(np.min(2 * np.diag(dgamma) - pair_sums.sum(axis=1))),
    }


def sample_bundles(generator: Generator, sample: SampleSpec) -> Iterator[DerivativeBundle]:
    """Derivative bundles at the origin and at `sample.count` random points of the box."""
    d = generator.dim
    rng = np.random.default_rng(sample.seed)
    grid = make_grid(sample.horizon, sample.steps)

    origin = path_from_values(grid, np.zeros((1, d)))
    yield generator.derivatives(0.0, origin, 0.0, np.zeros(d), np.zeros((d, d)))

    for _ in range(sample.count):
        index = int(rng.integers(0, sample.steps))
        values = rng.uniform(-sample.path_radius, sample.path_radius, size=(index + 1, d))
        values[0] = 0.0
        path = path_from_values(grid, values)
        y = float(rng.uniform(*sample.y_range))
        z = rng.uniform(*sample.z_range, size=d)
        gamma = rng.uniform(*sample.gamma_range, size=(d, d))
        gamma = 0.5 * (gamma + gamma.T)
        yield generator.derivatives(grid.node(index), path, y, z, gamma)


def check_monotonicity(
    generator: Generator,
    params: SchemeParams,
    step: float,
    sample: SampleSpec | None = None,
) -> MonotonicityReport:
    """Audit the weights and the sufficient conditions on a sample of points."""
    if params.dim != generator.dim:
        raise SchemeError(f"Scheme parameters have dimension {params.dim}, generator has {generator.dim}")
    sample = sample or SampleSpec()

    min_weights = dict.fromkeys(("a0", "drift", "diagonal", "cross"), math.inf)
    slacks: dict[str, float] = {}
    max_residual = 0.0
    notes: set[str] = set()
    witness: dict[str, Any] | None = None
    witness_score = 0.0
    binding: str | None = None
    points = 0

    off_diagonal = ~np.eye(params.dim, dtype=bool)
    for bundle in sample_bundles(generator, sample):
        points += 1
        notes.update(bundle.notes)
        weights = monotonicity_weights(bundle, params, step)
        families = {
            "a0": weights.a0,
            "drift": float(np.min(weights.a_drift)),
            "diagonal": float(np.min(weights.a_diag)),
            "cross": float(np.min(weights.a_cross[off_diagonal])) if params.dim > 1 else math.inf,
        }
        for family, value in families.items():
            min_weights[family] = min(min_weights[family], value)
        max_residual = max(max_residual, abs(weights.sum_residual))

        conditions = _conditions(bundle, params)
        for name, value in conditions.items():
            slacks[name] = min(slacks.get(name, math.inf), value)

        # Witness: the point with the most negative weight or required slack.
        failures = {f"weight {name}": value + WEIGHT_TOLERANCE for name, value in families.items()}
        failures.update({name: value for name, value in conditions.items() if name != "diagonal_dominance"})
        worst_name, worst_value = min(failures.items(), key=lambda item: item[1])
        if worst_value < witness_score:
            witness_score = worst_value
            binding = worst_name
            witness = {
                "time": bundle.time,
                "y": bundle.y,
                "z": bundle.z.tolist(),
                "gamma": bundle.gamma.tolist(),
                "dy": bundle.dy,
                "dz": bundle.dz.tolist(),
                "dgamma": bundle.dgamma.tolist(),
            }

    passed = witness is None
    LOGGER.debug("Monotonicity audit of %s with %s: %s over %d points", generator, params, passed, points)

    return MonotonicityReport(
        params=params,
        step=step,
        sample=sample,
        points=points,
        min_weights={name: (value if math.isfinite(value) else 0.0) for name, value in min_weights.items()},
        slacks={name: value for name, value in slacks.items() if name != "diagonal_dominance"},
        condition_slack=slacks["sum_condition"],
        diagonal_dominance=slacks["diagonal_dominance"] >= -WEIGHT_TOLERANCE,
        max_sum_residual=max_residual,
        lipschitz_constant=generator.lipschitz_constant,
        verdict="PASS" if passed else "FAIL",
        binding=binding,
        witness=witness,
        notes=sorted(notes),
    )


def suggest_params(
    generator: Generator,
    sample: SampleSpec | None = None,
    epsilon0: float = 0.1,
    step: float | None = None,
    quad_order: int | None = None,
) -> SchemeParams:
    """Double `mu` and/or `sigma` from unit values until the audit passes.

    `sigma` is kept equal across coordinates, which suffices for the diagonal balance condition
    whenever the diagonal dominance condition holds on the sample.
    """
    sample = sample or SampleSpec()
    step = step if step is not None else sample.horizon / sample.steps
    d = generator.dim

    bundles = list(sample_bundles(generator, sample))
    # Left side of the sum condition at unit mu and sigma, split into its drift and Gaussian parts.
    off_diagonal = ~np.eye(d, dtype=bool)
    max_drift = max(float(np.sum(bundle.dz)) for bundle in bundles)
    max_gauss = max(
        float(2 * np.trace(bundle.dgamma) - np.sum(bundle.dgamma[off_diagonal])) for bundle in bundles
    )

    mu_scale, sigma_scale = 1.0, 1.0
    report: MonotonicityReport | None = None
    for _ in range(SEARCH_CAP + 1):
        params = SchemeParams.uniform(
            d, mu=mu_scale, sigma=sigma_scale, quad_order=quad_order, epsilon0=epsilon0
        )
        report = check_monotonicity(generator, params, step, sample)
        if report.passed:
            LOGGER.debug("Suggested parameters for %s: %s", generator, params)
            if not report.diagonal_dominance:
                LOGGER.warning("Diagonal dominance fails on the sample; equal sigma passed nonetheless.")
            return params

        budget = (1.0 - epsilon0) / 2
        drift_part = max_drift / mu_scale
        gauss_part = max_gauss / sigma_scale**2
        grow_mu = drift_part > budget
        grow_sigma = gauss_part > budget
        if not (grow_mu or grow_sigma):
            grow_mu = grow_sigma = True
        if grow_mu:
            mu_scale *= 2
        if grow_sigma:
            sigma_scale *= 2

    assert report is not None  # noqa: S101
    raise ParameterSearchError(
        f"No passing parameters within {SEARCH_CAP} doublings; binding condition: {report.binding}",
        report,
    )

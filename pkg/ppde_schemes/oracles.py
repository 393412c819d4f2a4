"""Reference values for validating the scheme: closed forms, Monte-Carlo estimates and a brute-force
tree evaluator.

Oracles use the discrete monitoring of the terminal conditions, so that a comparison measures the
scheme error alone.

Monte-Carlo normal variates are produced from the 64-bit `PCG64` generator by the inverse-CDF
transform `Z = ndtri(U)` with `U = (k + 1/2) 2^-52`, `k` uniform on `0..2^52 - 1`, so that
`0 < U < 1` holds exactly. Samples are drawn in chunks of `SolverConfig.mc_chunk_size`, chunk
`c` using the `c`-th child of `SeedSequence(seed)`, and chunk sums are combined with compensated
summation in chunk order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING, Annotated, Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.special import ndtri
from scipy.stats import norm

from ppde_schemes.config import get_config
from ppde_schemes.functionals.generators import (
    DriftGenerator,
    GHeatGenerator,
    HeatGenerator,
    SemilinearGenerator,
)
from ppde_schemes.functionals.terminals import (
    AverageTerminal,
    CallTerminal,
    ConstantTerminal,
    CoordinateTerminal,
    SquareTerminal,
)
from ppde_schemes.models import PPDEError
from ppde_schemes.paths import path_from_values, zero_path
from ppde_schemes.scheme import BudgetExceededError, tree_size
from ppde_schemes.stencils import all_measures, step_children

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from ppde_schemes.functionals.terminal import Terminal
    from ppde_schemes.paths import DiscretePath
    from ppde_schemes.scheme import ProblemSpec
    from ppde_schemes.stencils import SchemeParams


LOGGER = logging.getLogger(__name__)

_UNIFORM_BITS = 52


# Exceptions
class OracleError(PPDEError, ValueError):
    """No oracle is available for the requested problem."""


# Data models
class ReferenceValue(BaseModel):
    """A reference value with its provenance."""

    value: Annotated[float, Field(description="The reference value.")]
    kind: Literal["closed-form", "monte-carlo", "brute-force"]
    stderr: Annotated[
        float | None, Field(description="Standard error; only set for Monte-Carlo values.", ge=0)
    ] = None
    provenance: Annotated[str, Field(description="How the value was obtained.")] = ""

    @model_validator(mode="after")
    def _stderr_iff_monte_carlo(self) -> ReferenceValue:
        if (self.stderr is not None) != (self.kind == "monte-carlo"):
            raise ValueError("stderr must be given exactly for Monte-Carlo reference values")
        return self


# Closed forms
def _bachelier(forward: float, strike: float, deviation: float) -> float:
    """`E[max(forward + deviation Z - strike, 0)]` for a standard normal `Z`."""
    moneyness = forward - strike
    if deviation == 0.0:
        return max(moneyness, 0.0)
    ratio = moneyness / deviation
    return moneyness * float(norm.cdf(ratio)) + deviation * float(norm.pdf(ratio))


def _linear_expectation(
    terminal: Terminal,
    index: int,
    path: DiscretePath,
    remaining: float,
    shift: float,
    variance_rate: float,
) -> float | None:
    """`E[g]` when coordinate `c` moves as `x + shift + N(0, variance_rate * remaining)`.

    Returns `None` for terminal kinds without a closed form under that law.
    """
    current = path.values[index]
    if isinstance(terminal, ConstantTerminal):
        return terminal.parameters.value
    if isinstance(terminal, CoordinateTerminal):
        return float(current[terminal.parameters.index]) + shift
    if isinstance(terminal, SquareTerminal):
        mean = float(current[terminal.parameters.index]) + shift
        return terminal.parameters.scale * (mean**2 + variance_rate * remaining)
    if isinstance(terminal, CallTerminal):
        mean = float(current[terminal.parameters.index]) + shift
        return _bachelier(mean, terminal.parameters.strike, math.sqrt(variance_rate * remaining))
    if isinstance(terminal, AverageTerminal) and shift == 0.0:
        c = terminal.parameters.index
        n = path.grid.steps
        return float(np.sum(path.values[1 : index + 1, c]) + (n - index) * current[c]) / n
    return None


def closed_form(problem: ProblemSpec, index: int, path: DiscretePath) -> ReferenceValue:
    """The exact solution `u(t_i, omega)` for the problems with a known closed form."""
    path.grid.check_index(index)
    if index > path.defined_upto:
        raise OracleError(f"Path is defined up to {path.defined_upto}, cannot evaluate at index {index}")

    if path.grid != problem.grid:
        raise OracleError("Path grid does not match the problem grid")
    generator, terminal = problem.generator, problem.terminal
    remaining = problem.grid.horizon - problem.grid.node(index)
    value: float | None = None
    provenance = ""

    if isinstance(generator, SemilinearGenerator):
        base = _linear_expectation(terminal, index, path, remaining, 0.0, 1.0)
        if base is not None:
            value = base * math.exp(generator.parameters.lam * remaining)
            provenance = "Gaussian expectation discounted by exp(lam (T - t))"
    elif isinstance(generator, DriftGenerator):
        c = getattr(terminal.parameters, "index", 0)
        shift = float(generator.drift[c]) * remaining
        if not isinstance(terminal, AverageTerminal):
            value = _linear_expectation(terminal, index, path, remaining, shift, 1.0)
            provenance = "Gaussian expectation under the drift b"
    elif isinstance(generator, HeatGenerator):
        value = _linear_expectation(terminal, index, path, remaining, 0.0, 1.0)
        provenance = "Gaussian expectation of the future increments"
    elif isinstance(generator, GHeatGenerator):
        low, high = generator.parameters.sigma_low, generator.parameters.sigma_high
        if isinstance(terminal, (ConstantTerminal, CoordinateTerminal, AverageTerminal)):
            value = _linear_expectation(terminal, index, path, remaining, 0.0, 0.0)
            provenance = "linear terminal: flat in the volatility"
        elif isinstance(terminal, CallTerminal) or (
            isinstance(terminal, SquareTerminal) and terminal.parameters.scale >= 0
        ):
            value = _linear_expectation(terminal, index, path, remaining, 0.0, high**2)
            provenance = "convex terminal: upper volatility"
        elif isinstance(terminal, SquareTerminal):
            value = _linear_expectation(terminal, index, path, remaining, 0.0, low**2)
            provenance = "concave terminal: lower volatility"

    if value is None:
        raise OracleError(f"No closed form registered for generator {generator} with terminal {terminal}")
    return ReferenceValue(value=value, kind="closed-form", provenance=provenance)


# Monte-Carlo
def _normals(seed_sequence: np.random.SeedSequence, shape: tuple[int, ...]) -> NDArray[np.float64]:
    rng = np.random.Generator(np.random.PCG64(seed_sequence))
    uniforms = (rng.integers(0, 2**_UNIFORM_BITS, size=shape, dtype=np.int64) + 0.5) * 2.0**-_UNIFORM_BITS
    return ndtri(uniforms)


def _chunk_sums(
    problem: ProblemSpec,
    index: int,
    path: DiscretePath,
    seed_sequence: np.random.SeedSequence,
    samples: int,
    volatility: float,
    drift: NDArray[np.float64],
) -> tuple[float, float]:
    grid = problem.grid
    remaining = grid.steps - index
    step = grid.step
    d = problem.dim

    normals = _normals(seed_sequence, (samples, remaining, d))
    increments = volatility * math.sqrt(step) * normals + drift * step
    skeletons = np.empty((samples, grid.steps + 1, d))
    skeletons[:, : index + 1] = path.values[: index + 1]
    skeletons[:, index + 1 :] = path.values[index] + np.cumsum(increments, axis=1)

    payoffs = problem.terminal.evaluate_batch(grid, skeletons)
    return math.fsum(payoffs), math.fsum(payoffs**2)


def _simulate(
    problem: ProblemSpec,
    index: int,
    path: DiscretePath,
    samples: int,
    seed: int,
    volatility: float = 1.0,
    drift: NDArray[np.float64] | None = None,
) -> tuple[float, float]:
    """Mean and standard error of `g` over simulated skeletons started at `(t_i, omega)`."""
    if samples < 2:
        raise OracleError(f"Monte-Carlo estimates need at least 2 samples, got {samples}")
    problem.grid.check_index(index)
    if index > path.defined_upto:
        raise OracleError(f"Path is defined up to {path.defined_upto}, cannot evaluate at index {index}")

    drift = np.zeros(problem.dim) if drift is None else drift
    if index == problem.grid.steps:
        value = problem.terminal.evaluate(path.prefix(index))
        return value, 0.0

    config = get_config()
    chunk_size = config.mc_chunk_size
    sizes = [min(chunk_size, samples - start) for start in range(0, samples, chunk_size)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(chunk: int) -> tuple[float, float]:
        return _chunk_sums(problem, index, path, children[chunk], sizes[chunk], volatility, drift)

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        sums = list(pool.map(run, range(len(sizes))))

    total = math.fsum(first for first, _ in sums)
    total_squares = math.fsum(second for _, second in sums)
    mean = total / samples
    variance = max(total_squares - samples * mean**2, 0.0) / (samples - 1)
    return mean, math.sqrt(variance / samples)


def mc_reference(
    problem: ProblemSpec, index: int, path: DiscretePath, samples: int, seed: int
) -> ReferenceValue:
    """Feynman-Kac Monte-Carlo estimate for the linear generators.

    Skeletons follow a Brownian motion (with the drift `b` for the `drift` generator) sampled on the
    grid; the `semilinear-linear-y` mean is multiplied by `exp(lam (T - t_i))`.
    """
    generator = problem.generator
    if not isinstance(generator, HeatGenerator):
        raise OracleError(f"Monte-Carlo reference is not available for generator {generator}")

    drift = generator.drift if isinstance(generator, DriftGenerator) else None
    mean, stderr = _simulate(problem, index, path, samples, seed, drift=drift)

    factor = 1.0
    if isinstance(generator, SemilinearGenerator):
        factor = math.exp(generator.parameters.lam * (problem.grid.horizon - problem.grid.node(index)))

    LOGGER.debug(
        "Monte-Carlo reference for %s: %r +- %r (%d samples)", problem.describe(), mean, stderr, samples
    )
    return ReferenceValue(
        value=factor * mean,
        kind="monte-carlo",
        stderr=factor * stderr,
        provenance=f"{samples} PCG64 samples, seed {seed}",
    )


def mc_sup_reference(
    problem: ProblemSpec,
    index: int,
    path: DiscretePath,
    volatilities: Sequence[float],
    samples: int,
    seed: int,
) -> ReferenceValue:
    """Largest Monte-Carlo value over constant volatilities for the one-dimensional `g-heat` problem.

    Constant controls give a lower bound on the G-expectation, which is attained for convex or
    concave terminals. Every volatility reuses the same normal variates.
    """
    if not isinstance(problem.generator, GHeatGenerator):
        raise OracleError(f"Volatility sup reference needs the g-heat generator, got {problem.generator}")
    if problem.dim != 1:
        raise OracleError(f"Volatility sup reference is one-dimensional, got dimension {problem.dim}")
    if not volatilities:
        raise OracleError("Volatility grid is empty")

    results = []
    for volatility in volatilities:
        if volatility < 0:
            raise OracleError(f"Volatilities must be nonnegative, got {volatility}")
        results.append((*_simulate(problem, index, path, samples, seed, volatility=volatility), volatility))

    value, stderr, best = max(results, key=lambda result: result[0])
    return ReferenceValue(
        value=value,
        kind="monte-carlo",
        stderr=stderr,
        provenance=(
            f"sup over constant volatilities, attained at sigma={best!r}; {samples} samples, seed {seed}"
        ),
    )


# Brute force
def brute_force_solve(
    problem: ProblemSpec, params: SchemeParams, budget: int | None = None
) -> ReferenceValue:
    """`u^h(0, 0)` by evaluating the full, non-recombining tree level by level."""
    grid, d = problem.grid, problem.dim
    if params.dim != d:
        raise OracleError(f"Scheme parameters have dimension {params.dim}, problem has {d}")
    budget = budget if budget is not None else get_config().node_budget
    step = grid.step

    stencils = [step_children(measure, params, step) for measure in all_measures(d)]
    increments = np.vstack([stencil.increments for stencil in stencils])
    branching = increments.shape[0]

    size = tree_size(branching, grid.steps)
    if size > budget:
        raise BudgetExceededError(f"Full tree has {size} nodes, exceeding the node budget of {budget}")

    # Forward: skeletons of every node, level by level.
    levels = [zero_path(grid, d).values[np.newaxis, :, :]]
    for _ in range(grid.steps):
        parents = levels[-1]
        ends = parents[:, -1:, :] + increments[np.newaxis, :, :]
        children = np.concatenate(
            (np.repeat(parents, branching, axis=0), ends.reshape(-1, 1, d)),
            axis=1,
        )
        levels.append(children)

    # Backward: apply the one-step operator from the leaves to the root.
    values = problem.terminal.evaluate_batch(grid, levels[-1])
    mu, sigma = params.mu_array, params.sigma_array
    offsets = np.cumsum([0] + [len(stencil) for stencil in stencils])
    pairs = [(i, j) for i in range(d) for j in range(d) if i != j]
    for level in range(grid.steps - 1, -1, -1):
        per_node = values.reshape(-1, branching)
        expectations = [
            per_node[:, offsets[k] : offsets[k + 1]] @ stencil.weights for k, stencil in enumerate(stencils)
        ]
        d0 = expectations[0]
        drift = np.stack(expectations[1 : 1 + d], axis=1)
        diagonal = np.stack(expectations[1 + d : 1 + 2 * d], axis=1)

        new_values = np.empty(per_node.shape[0])
        for node in range(per_node.shape[0]):
            y = d0[node]
            z = (drift[node] - y) / (mu * step)
            gamma = np.diag((diagonal[node] - y) / (sigma**2 * step / 2))
            for k, (i, j) in enumerate(pairs):
                cross = expectations[1 + 2 * d + k][node] - diagonal[node, i] - diagonal[node, j] + y
                gamma[i, j] = cross / (sigma[i] * sigma[j] * step)
            gamma = 0.5 * (gamma + gamma.T)
            node_path = path_from_values(grid, levels[level][node])
            generator_value = problem.generator.evaluate(grid.node(level), node_path, y, z, gamma)
            new_values[node] = y + step * generator_value
        values = new_values

    LOGGER.debug("Brute-force solve of %s over %d nodes", problem.describe(), size)
    return ReferenceValue(
        value=float(values[0]),
        kind="brute-force",
        provenance=f"full tree with branching {branching} over {grid.steps} levels",
    )

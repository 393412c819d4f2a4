"""Convergence studies, consistency sweeps and stability probes with tabular output.

CSV output has a header line, one line per row, floats printed with 17 significant digits and `\\n`
line endings. JSON output is a single object
`{"rows": [...], "slope": x, "slope_halfwidth": y, "exact": bool}`.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import TYPE_CHECKING, Annotated, Literal

import numpy as np
from pydantic import BaseModel, Field
from scipy import stats

from ppde_schemes.config import get_config
from ppde_schemes.functionals import get_terminal
from ppde_schemes.functionals.generator import eval_generator
from ppde_schemes.functionals.smooth import eval_test_functional
from ppde_schemes.models import PPDEError
from ppde_schemes.oracles import closed_form
from ppde_schemes.paths import d_metric, freeze, make_grid, path_from_values, zero_path
from ppde_schemes.scheme import ProblemSpec, Solver, apply_step, evaluate_uh

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Sequence

    from ppde_schemes.functionals.generator import Generator
    from ppde_schemes.functionals.smooth import SmoothFunctional
    from ppde_schemes.memo import StateKeyPolicy
    from ppde_schemes.paths import DiscretePath
    from ppde_schemes.stencils import SchemeParams


LOGGER = logging.getLogger(__name__)

EXACT_ULPS = 64
"""Errors within this many machine epsilons of the reference magnitude count as exact."""

_EPS = float(np.finfo(np.float64).eps)


# Exceptions
class HarnessError(PPDEError, ValueError):
    """Invalid study setup."""


# Data models
class ConvergenceRow(BaseModel):
    """One grid of a convergence study."""

    n: int
    h: float
    value: Annotated[float, Field(description="u^h(0, 0).")]
    reference: Annotated[float, Field(description="The closed-form value.")]
    error: Annotated[float, Field(description="|value - reference|.", ge=0)]


class ConvergenceTable(BaseModel):
    """Errors against the closed form on successively finer grids, sorted by decreasing `h`."""

    rows: list[ConvergenceRow] = []
    slope: Annotated[float | None, Field(description="Least-squares slope of log error vs log h.")] = None
    slope_halfwidth: Annotated[float | None, Field(description="95 % confidence half-width.")] = None
    exact: Annotated[bool, Field(description="All errors are at roundoff level.")] = False


class ConsistencyRow(BaseModel):
    """One step size of a consistency sweep."""

    h: float
    residual: Annotated[float, Field(description="|(phi - T_h phi)/h - L phi|.", ge=0)]
    numerator: Annotated[float, Field(description="(phi - T_h phi) - h L phi.")] = 0.0
    magnitude: Annotated[float, Field(description="Largest magnitude of the values involved.")] = 1.0


class ConsistencyTable(BaseModel):
    """One-step residuals of a test functional, sorted by decreasing `h`."""

    rows: list[ConsistencyRow] = []
    slope: float | None = None
    slope_halfwidth: float | None = None
    exact: bool = False


class ConsistencyAnchor(BaseModel):
    """Anchor `(t, omega)` of a consistency sweep.

    The path ramps linearly from the origin to `value` over the grid nodes up to `time`.
    """

    time: Annotated[float, Field(description="Anchor time t > 0, a multiple of every h.", gt=0)] = 0.5
    value: Annotated[float, Field(description="Path value at the anchor, in every coordinate.")] = 0.3


class PerturbationSpec(BaseModel):
    """Random skeleton bumps used by the stability probe."""

    count: Annotated[int, Field(description="Number of perturbation pairs.", ge=0)] = 16
    magnitude: Annotated[float, Field(description="Largest bump size.", ge=0)] = 0.1
    index: Annotated[int | None, Field(description="Probe index (defaults to n // 2).", ge=0)] = None


class StabilityReport(BaseModel):
    """Empirical Lipschitz and time-regularity ratios of `u^h`."""

    n: int
    lipschitz_ratio: Annotated[
        float, Field(description="sup |u^h(omega1) - u^h(omega2)| / ||omega1 - omega2||.")
    ]
    time_ratio: Annotated[
        float, Field(description="sup |u^h(t, omega) - u^h(t', omega stopped at t)| / sqrt(t' - t + h).")
    ]
    sup_value: Annotated[float, Field(description="sup |u^h| over the probed points.")]
    pairs: Annotated[int, Field(description="Nondegenerate perturbation pairs used.")]
    time_pairs: Annotated[int, Field(description="Time pairs used.")]


def fit_slope(steps: Sequence[float], errors: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of `log(error)` against `log(h)` and its 95 % confidence half-width.

    The half-width is infinite for two points.
    """
    if len(steps) != len(errors):
        raise HarnessError(f"Got {len(steps)} step sizes but {len(errors)} errors")
    if len(steps) < 2:
        raise HarnessError("Slope fit needs at least two points")
    if min(errors) <= 0 or min(steps) <= 0:
        raise HarnessError("Slope fit needs positive step sizes and errors")

    fit = stats.linregress(np.log(steps), np.log(errors))
    if len(steps) == 2:
        return float(fit.slope), math.inf
    return float(fit.slope), float(stats.t.ppf(0.975, len(steps) - 2) * fit.stderr)


def is_exact(errors: Sequence[float], magnitudes: Sequence[float]) -> bool:
    """Whether every error is within `EXACT_ULPS` machine epsilons of `max(|magnitude|, 1)`."""
    return all(
        error <= EXACT_ULPS * _EPS * max(abs(magnitude), 1.0)
        for error, magnitude in zip(errors, magnitudes)
    )


def _slope_or_none(steps: Sequence[float], errors: Sequence[float]) -> tuple[float | None, float | None]:
    positive = [(step, error) for step, error in zip(steps, errors) if error > 0]
    if len(positive) < 2:
        return None, None
    return fit_slope([step for step, _ in positive], [error for _, error in positive])


def convergence_study(
    problem: ProblemSpec,
    params: SchemeParams,
    ns: Sequence[int],
    memo: StateKeyPolicy | str | None = None,
    *,
    budget: int | None = None,
) -> ConvergenceTable:
    """Errors of `u^h(0, 0)` against the closed form for every `n` in `ns`."""
    if len(ns) < 3:
        raise HarnessError(f"Convergence study needs at least 3 grids, got {len(ns)}")
    if min(ns) < 2:
        raise HarnessError(f"Every grid needs at least 2 steps, got {min(ns)}")
    ns = sorted(set(ns))
    ratios = {round(finer / coarser, 9) for coarser, finer in zip(ns, ns[1:])}
    if len(ratios) > 1:
        LOGGER.warning("Grid sizes %s are not geometrically spaced; the slope fit may wobble.", ns)

    def row(n: int) -> ConvergenceRow:
        refined = problem.with_steps(n)
        reference = closed_form(refined, 0, zero_path(refined.grid, refined.dim)).value
        value = Solver(refined, params, memo, budget=budget, threads=1).solve().value
        return ConvergenceRow(
            n=n, h=refined.grid.step, value=value, reference=reference, error=abs(value - reference)
        )

    # Rows are independent; assembly stays in grid order.
    with ThreadPoolExecutor(max_workers=get_config().threads) as pool:
        rows = list(pool.map(row, ns))

    exact = is_exact([_.error for _ in rows], [_.reference for _ in rows])
    slope = halfwidth = None
    if not exact:
        slope, halfwidth = _slope_or_none([_.h for _ in rows], [_.error for _ in rows])

    LOGGER.debug("Convergence study of %s: slope=%r exact=%s", problem.describe(), slope, exact)
    return ConvergenceTable(rows=rows, slope=slope, slope_halfwidth=halfwidth, exact=exact)


def consistency_sweep(
    functional: SmoothFunctional,
    generator: Generator,
    params: SchemeParams,
    anchor: ConsistencyAnchor,
    steps: Sequence[float],
) -> ConsistencyTable:
    """One-step residuals `|(phi(t, omega) - T_h[phi(t + h, .)])/h - L phi(t, omega)|` for each `h`.

    `L phi = -d_t phi - G(t, omega, phi, d_omega phi, d^2_omega phi)` uses the analytic derivatives
    of the functional.
    """
    if list(steps) != sorted(steps, reverse=True):
        raise HarnessError("Step sizes must be decreasing")
    if params.dim != generator.dim:
        raise HarnessError(f"Scheme parameters have dimension {params.dim}, generator has {generator.dim}")

    d = generator.dim
    rows = []
    for step in steps:
        k = round(anchor.time / step)
        if k < 1 or not math.isclose(k * step, anchor.time, rel_tol=1e-9):
            raise HarnessError(f"Anchor time {anchor.time} is not a positive multiple of h = {step}")

        # A grid with step h reaching one step past the anchor.
        grid = make_grid((k + 1) * step, k + 1)
        ramp = np.linspace(0.0, anchor.value, k + 1)
        path = path_from_values(grid, np.repeat(ramp[:, np.newaxis], d, axis=1))
        problem = ProblemSpec(dim=d, grid=grid, generator=generator, terminal=get_terminal("constant"))

        here = eval_test_functional(functional, k, path)
        stepped = apply_step(
            problem, params, k, path, lambda child: eval_test_functional(functional, k + 1, child).value
        )
        operator = -here.dt - eval_generator(generator, k, path, here.value, here.domega, here.domega2)

        numerator = (here.value - stepped) - grid.step * operator
        rows.append(
            ConsistencyRow(
                h=grid.step,
                residual=abs(numerator) / grid.step,
                numerator=numerator,
                magnitude=max(abs(here.value), abs(stepped), grid.step * abs(operator)),
            )
        )

    exact = is_exact([abs(_.numerator) for _ in rows], [_.magnitude for _ in rows])
    slope = halfwidth = None
    if not exact:
        slope, halfwidth = _slope_or_none([_.h for _ in rows], [_.residual for _ in rows])

    LOGGER.debug("Consistency sweep of %s under %s: slope=%r exact=%s", functional, generator, slope, exact)
    return ConsistencyTable(rows=rows, slope=slope, slope_halfwidth=halfwidth, exact=exact)


def stability_probe(
    problem: ProblemSpec,
    params: SchemeParams,
    n: int,
    perturbation: PerturbationSpec,
    seed: int,
    memo: StateKeyPolicy | str | None = None,
    *,
    budget: int | None = None,
) -> StabilityReport:
    """Empirical space and time regularity of `u^h` on random skeletons.

    Space pairs differ by a bump `delta` applied from a random node onward, compared at the probe
    index. Time pairs compare `u^h(t_i, omega)` with `u^h(t_j, omega stopped at t_i)`; the pair
    `(0, n)` on the zero path is always included.
    """
    refined = problem.with_steps(n)
    grid, d = refined.grid, refined.dim
    index = perturbation.index if perturbation.index is not None else n // 2
    grid.check_index(index)
    rng = np.random.default_rng(seed)

    def value(i: int, omega: DiscretePath) -> float:
        return evaluate_uh(refined, params, i, omega, memo, budget=budget)

    def random_path(upto: int) -> DiscretePath:
        values = np.zeros((upto + 1, d))
        values[1:] = np.cumsum(math.sqrt(grid.step) * rng.standard_normal((upto, d)), axis=0)
        return path_from_values(grid, values)

    sup_value = 0.0
    lipschitz_ratio = 0.0
    pairs = 0
    for _ in range(perturbation.count if index >= 1 else 0):
        base = random_path(index)
        start = int(rng.integers(1, index + 1))
        direction = rng.standard_normal(d)
        norm = float(np.linalg.norm(direction))
        if norm == 0.0 or perturbation.magnitude == 0.0:
            continue
        delta = perturbation.magnitude * rng.uniform(0.0, 1.0) * direction / norm
        bumped_values = base.values.copy()
        bumped_values[start:] += delta
        bumped = path_from_values(grid, bumped_values)

        distance = d_metric(index, base, index, bumped)
        if distance == 0.0:
            continue
        first, second = value(index, base), value(index, bumped)
        sup_value = max(sup_value, abs(first), abs(second))
        lipschitz_ratio = max(lipschitz_ratio, abs(first - second) / distance)
        pairs += 1

    time_pairs = [(0, n, zero_path(grid, d))]
    for _ in range(perturbation.count):
        if n < 1:
            break
        i = int(rng.integers(0, n))
        j = int(rng.integers(i + 1, n + 1))
        time_pairs.append((i, j, random_path(i)))

    time_ratio = 0.0
    for i, j, omega in time_pairs:
        early, late = value(i, omega), value(j, freeze(omega, j))
        sup_value = max(sup_value, abs(early), abs(late))
        time_ratio = max(time_ratio, abs(early - late) / math.sqrt(grid.node(j) - grid.node(i) + grid.step))

    LOGGER.debug(
        "Stability probe of %s: lipschitz=%r time=%r over %d pairs",
        refined.describe(),
        lipschitz_ratio,
        time_ratio,
        pairs,
    )
    return StabilityReport(
        n=n,
        lipschitz_ratio=lipschitz_ratio,
        time_ratio=time_ratio,
        sup_value=sup_value,
        pairs=pairs,
        time_pairs=len(time_pairs),
    )


def _number(value: float | None) -> float | None:
    if value is None or not math.isfinite(value):
        return None
    return value


def _format(value: float) -> str:
    return format(value, ".17g")


def render(
    table: ConvergenceTable | ConsistencyTable,
    format: Literal["csv", "json"] = "csv",  # noqa: A002
) -> str:
    """The documented text layout of a table."""
    if format == "json":
        document = {
            "rows": [row.model_dump() for row in table.rows],
            "slope": _number(table.slope),
            "slope_halfwidth": _number(table.slope_halfwidth),
            "exact": table.exact,
        }
        return json.dumps(document, allow_nan=False) + "\n"
    if format != "csv":
        raise HarnessError(f"Unknown output format: {format}")

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    if isinstance(table, ConvergenceTable):
        writer.writerow(["n", "h", "value", "reference", "error"])
        for row in table.rows:
            writer.writerow([row.n, *(_format(_) for _ in (row.h, row.value, row.reference, row.error))])
    else:
        writer.writerow(["h", "residual"])
        for row in table.rows:
            writer.writerow([_format(row.h), _format(row.residual)])
    return buffer.getvalue()


def emit(
    table: ConvergenceTable | ConsistencyTable,
    path: Path | str | None,
    format: Literal["csv", "json"] = "csv",  # noqa: A002
) -> None:
    """Write a table to `path` (standard output for `None` or `-`)."""
    text = render(table, format)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    with Path(path).open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)

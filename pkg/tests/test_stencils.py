"""Test the step measures and their stencils."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import pytest

if TYPE_CHECKING:
    from ppde_schemes.paths import TimeGrid

    from .conftest import ParamsFixture


@pytest.mark.parametrize("order", [1, 2, 5, 8])
def test_hermite_rule(order: int) -> None:
    """Nodes are symmetric, weights are positive with unit mass, moments are those of N(0, 1)."""
    import numpy as np

    from ppde_schemes.stencils import hermite_rule

    nodes, weights = hermite_rule(order)

    assert len(nodes) == order
    assert nodes.tolist() == [-_ for _ in nodes[::-1]]
    assert np.all(weights > 0)
    assert math.fsum(weights) == pytest.approx(1.0, abs=1e-15)

    gaussian_moments = {0: 1.0, 1: 0.0, 2: 1.0, 3: 0.0, 4: 3.0, 5: 0.0, 6: 15.0}
    for degree, moment in gaussian_moments.items():
        if degree <= 2 * order - 1:
            assert float(weights @ nodes**degree) == pytest.approx(moment, abs=1e-12)


def test_hermite_rule_bounds(monkeypatch: pytest.MonkeyPatch) -> None:
    """The order must be positive and below the configured cap."""
    from ppde_schemes.stencils import StencilError, hermite_rule

    monkeypatch.setenv("PPDE_QUAD_ORDER_CAP", "10")

    with pytest.raises(StencilError, match="positive"):
        hermite_rule(0)
    with pytest.raises(StencilError, match="cap of 10"):
        hermite_rule(11)


def test_all_measures() -> None:
    """`1 + 2d + d(d-1)` measures, in the canonical order."""
    from ppde_schemes.stencils import all_measures

    assert [str(_) for _ in all_measures(2)] == [
        "P0",
        "P(1)",
        "P(2)",
        "P(11)",
        "P(22)",
        "P(1,2)",
        "P(2,1)",
    ]
    assert len(all_measures(3)) == 1 + 6 + 6


def test_children(params: ParamsFixture) -> None:
    """Drift children move by `mu h`; Gaussian children have variance `sigma^2 h` per coordinate."""
    from ppde_schemes.stencils import MeasureId, step_children

    scheme = params(dim=2, mu=2.0, sigma=3.0)
    h = 0.25

    zero = step_children(MeasureId.zero(), scheme, h)
    assert len(zero) == 1
    assert zero.increments.tolist() == [[0.0, 0.0]]

    drift = step_children(MeasureId.drift(1), scheme, h)
    assert drift.increments.tolist() == [[0.0, 0.5]]

    diagonal = step_children(MeasureId.diagonal(0), scheme, h)
    assert len(diagonal) == 5
    assert float(diagonal.weights @ diagonal.increments[:, 0] ** 2) == pytest.approx(9.0 * h)
    assert diagonal.increments[:, 1].tolist() == [0.0] * 5

    cross = step_children(MeasureId.cross(0, 1), scheme, h)
    covariance = cross.weights @ (cross.increments[:, 0] * cross.increments[:, 1])
    assert float(covariance) == pytest.approx(9.0 * h)


def test_children_errors(params: ParamsFixture) -> None:
    """Bad steps, equal cross indices and out-of-range indices are rejected."""
    from ppde_schemes.stencils import MeasureId, StencilError, step_children

    scheme = params()

    with pytest.raises(StencilError, match="distinct"):
        MeasureId.cross(0, 0)
    with pytest.raises(StencilError, match="positive"):
        step_children(MeasureId.zero(), scheme, 0.0)
    with pytest.raises(StencilError, match="outside"):
        step_children(MeasureId.drift(1), scheme, 0.5)


def test_scheme_params_validation() -> None:
    """Sizes must match and entries must be positive."""
    from pydantic import ValidationError

    from ppde_schemes.stencils import SchemeParams

    with pytest.raises(ValidationError, match="mu has 2 entries"):
        SchemeParams(mu=(1.0, 1.0), sigma=(1.0,))
    with pytest.raises(ValidationError, match="sigma entries must be positive"):
        SchemeParams(mu=(1.0,), sigma=(0.0,))
    with pytest.raises(ValidationError):
        SchemeParams(mu=(1.0,), sigma=(1.0,), epsilon0=1.0)


def test_step_expectation(grid: TimeGrid, params: ParamsFixture) -> None:
    """Expectations of the endpoint under each measure."""
    from ppde_schemes.paths import path_from_values
    from ppde_schemes.stencils import MeasureId, step_expectation

    scheme = params(mu=2.0, sigma=1.5)
    path = path_from_values(grid, [0.0, 1.0, 3.0])

    def square(child):  # noqa: ANN001, ANN202
        return float(child.current[0]) ** 2

    # Stopped at t_1 the parent endpoint is 1.0.
    assert step_expectation(MeasureId.zero(), scheme, 0.25, 1, path, square) == 1.0
    assert step_expectation(MeasureId.drift(0), scheme, 0.25, 1, path, square) == pytest.approx(2.25)
    assert step_expectation(MeasureId.diagonal(0), scheme, 0.25, 1, path, square) == pytest.approx(
        1.0 + 1.5**2 * 0.25
    )


def test_cross_measures_are_symmetric(grid: TimeGrid) -> None:
    """`P(ij)` and `P(ji)` carry the same children with the same weights."""
    import numpy as np

    from ppde_schemes.paths import zero_path
    from ppde_schemes.stencils import MeasureId, SchemeParams, step_children, step_expectation

    params = SchemeParams(mu=(1.0, 2.0, 3.0), sigma=(0.5, 1.5, 2.0), quad_order=5)
    path = zero_path(grid, dim=3)

    def skewed(child):  # noqa: ANN001, ANN202
        x = child.current
        return float(np.exp(x[0]) + x[1] ** 3 - 2.0 * x[2])

    for i in range(3):
        for j in range(3):
            if i == j:
                continue
            forward = step_children(MeasureId.cross(i, j), params, 0.25)
            backward = step_children(MeasureId.cross(j, i), params, 0.25)

            assert np.array_equal(forward.weights, backward.weights)
            assert np.array_equal(forward.increments, backward.increments)
            forward_mean = step_expectation(MeasureId.cross(i, j), params, 0.25, 0, path, skewed)
            backward_mean = step_expectation(MeasureId.cross(j, i), params, 0.25, 0, path, skewed)
            assert forward_mean == backward_mean


def test_diagonal_difference_is_first_order(params: ParamsFixture) -> None:
    """`(E^P(ii) - E^P0) / (sigma^2 h / 2)` approaches the second derivative at rate `h`."""
    from ppde_schemes.paths import make_grid, path_from_values
    from ppde_schemes.stencils import MeasureId, step_expectation

    scheme_params = params(sigma=1.0)
    start = 0.3

    def cosine(child):  # noqa: ANN001, ANN202
        return math.cos(float(child.current[0]))

    errors = []
    for steps in (8, 16, 32, 64):
        grid = make_grid(1.0, steps)
        step = grid.step
        path = path_from_values(grid, [start])
        diagonal = step_expectation(MeasureId.diagonal(0), scheme_params, step, 0, path, cosine)
        zero = step_expectation(MeasureId.zero(), scheme_params, step, 0, path, cosine)
        estimate = (diagonal - zero) / (step / 2)
        errors.append(estimate + math.cos(start))

        # The leading error term is sigma^2 h phi'''' / 4.
        assert errors[-1] == pytest.approx(step * math.cos(start) / 4, rel=0.05)

    for coarse, fine in zip(errors, errors[1:]):
        assert coarse / fine == pytest.approx(2.0, rel=0.05)

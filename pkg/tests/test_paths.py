"""Test the discrete paths and grids."""

from __future__ import annotations

from typing import TYPE_CHECKING

import pytest

if TYPE_CHECKING:
    from ppde_schemes.paths import TimeGrid


def test_grid_nodes() -> None:
    """The grid is uniform and its last node is the horizon exactly."""
    from ppde_schemes.paths import make_grid

    grid = make_grid(1.0, 3)

    assert grid.step == pytest.approx(1 / 3)
    assert grid.node(0) == 0.0
    assert grid.node(3) == 1.0
    assert grid.nodes[-1] == 1.0
    assert len(grid.nodes) == 4


@pytest.mark.parametrize(
    ("horizon", "steps"), [(0.0, 4), (-1.0, 4), (float("inf"), 4), (1.0, 0), (1.0, 2.5)]
)
def test_invalid_grid(horizon: float, steps: int) -> None:
    """Nonpositive horizons and non-integer or zero step counts are rejected."""
    from ppde_schemes.paths import PathError, make_grid

    with pytest.raises(PathError):
        make_grid(horizon, steps)


def test_zero_path(grid: TimeGrid) -> None:
    """The zero path is defined at `t_0` only."""
    from ppde_schemes.paths import zero_path

    path = zero_path(grid, dim=2)

    assert path.dim == 2
    assert path.defined_upto == 0
    assert path.time == 0.0
    assert not path.is_terminal
    assert path.current.tolist() == [0.0, 0.0]


def test_paths_start_at_origin(grid: TimeGrid) -> None:
    """Row 0 must be the origin and values must be finite."""
    from ppde_schemes.paths import PathError, path_from_values

    with pytest.raises(PathError, match="origin"):
        path_from_values(grid, [1.0, 2.0])

    with pytest.raises(PathError, match="finite"):
        path_from_values(grid, [0.0, float("nan")])

    with pytest.raises(PathError, match="beyond"):
        path_from_values(grid, [0.0] * 6)


def test_concat(grid: TimeGrid) -> None:
    """Concatenation appends `current + increment` and leaves the parent untouched."""
    from ppde_schemes.paths import concat, zero_path

    parent = zero_path(grid)
    child = concat(concat(parent, 0.5), -0.25)

    assert child.defined_upto == 2
    assert child.values[:, 0].tolist() == [0.0, 0.5, 0.25]
    assert parent.defined_upto == 0


def test_concat_errors(grid: TimeGrid) -> None:
    """Terminal paths cannot be extended, and the increment dimension must match."""
    from ppde_schemes.paths import PathError, concat, path_from_values, zero_path

    with pytest.raises(PathError, match="terminal"):
        concat(path_from_values(grid, [0.0, 1.0, 2.0, 3.0, 4.0]), 1.0)

    with pytest.raises(PathError, match="dimension"):
        concat(zero_path(grid, dim=2), [1.0])


def test_paths_are_read_only(grid: TimeGrid) -> None:
    """The skeleton values cannot be modified in place."""
    import numpy as np

    from ppde_schemes.paths import path_from_values

    values = np.array([0.0, 1.0])
    path = path_from_values(grid, values)
    values[1] = 5.0

    assert path.values[1, 0] == 1.0
    with pytest.raises(ValueError, match="read-only"):
        path.values[1, 0] = 2.0


def test_freeze(grid: TimeGrid) -> None:
    """Freezing holds the current value up to the given index."""
    from ppde_schemes.paths import PathError, freeze, path_from_values

    path = path_from_values(grid, [0.0, 1.0, -1.0])
    frozen = freeze(path, 4)

    assert frozen.is_terminal
    assert frozen.values[:, 0].tolist() == [0.0, 1.0, -1.0, -1.0, -1.0]

    with pytest.raises(PathError):
        freeze(path, 1)


def test_sup_norm(grid: TimeGrid) -> None:
    """The sup norm uses the Euclidean norm per node, up to the given index."""
    from ppde_schemes.paths import path_from_values, sup_norm

    path = path_from_values(grid, [[0.0, 0.0], [3.0, 4.0], [1.0, 0.0], [0.0, 7.0]])

    assert sup_norm(path, 2) == 5.0
    assert sup_norm(path, 3) == 7.0


def test_d_metric_examples(grid: TimeGrid) -> None:
    """The pseudometric adds the square root of the time gap to the stopped sup distance."""
    import math

    from ppde_schemes.paths import d_metric, freeze, path_from_values, zero_path

    path = path_from_values(grid, [0.0, 1.0, 2.0])

    assert d_metric(2, path, 2, path) == 0.0
    assert d_metric(0, zero_path(grid), 2, path) == pytest.approx(math.sqrt(0.5) + 2.0)
    # A path and its frozen extension differ by the time gap only.
    assert d_metric(2, path, 4, freeze(path, 4)) == pytest.approx(math.sqrt(0.5))


def test_d_metric_symmetric_and_triangle(grid: TimeGrid) -> None:
    """The pseudometric is symmetric and satisfies the triangle inequality on random skeletons."""
    import numpy as np

    from ppde_schemes.paths import d_metric, path_from_values

    rng = np.random.default_rng(7)
    for _ in range(20):
        points = []
        for _ in range(3):
            index = int(rng.integers(0, 5))
            values = np.concatenate(([0.0], rng.normal(size=index)))
            points.append((index, path_from_values(grid, values)))
        (i, a), (j, b), (k, c) = points

        assert d_metric(i, a, j, b) == pytest.approx(d_metric(j, b, i, a))
        assert d_metric(i, a, k, c) <= d_metric(i, a, j, b) + d_metric(j, b, k, c) + 1e-12


def test_d_metric_different_grids() -> None:
    """Skeletons on different grids of the same horizon are compared on the union of nodes."""
    from ppde_schemes.paths import PathError, d_metric, make_grid, path_from_values

    coarse = path_from_values(make_grid(1.0, 2), [0.0, 1.0, 1.0])
    fine = path_from_values(make_grid(1.0, 4), [0.0, 0.0, 1.0, 1.0, 1.0])

    # At t = 0.25 the coarse path is still 0, so both read the same values everywhere.
    assert d_metric(2, coarse, 4, fine) == 0.0

    with pytest.raises(PathError, match="horizons"):
        d_metric(0, coarse, 0, path_from_values(make_grid(2.0, 2), [0.0]))

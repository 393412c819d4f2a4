"""Discrete paths on a uniform time grid.

A continuous path is represented by its skeleton on the grid `t_i = i * h`, `h = T / n`.
All functionals in the package read skeletons only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from ppde_schemes.models import PPDEError

if TYPE_CHECKING:  # pragma: no cover
    from numpy.typing import ArrayLike, NDArray


LOGGER = logging.getLogger(__name__)


# Exceptions
class PathError(PPDEError, ValueError):
    """Invalid grid or path operation."""


# Data models
@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on `[0, T]` with `n` steps."""

    horizon: float
    steps: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.horizon) or self.horizon <= 0:
            raise PathError(f"Grid horizon must be a positive number, got {self.horizon!r}")
        if isinstance(self.steps, bool) or not isinstance(self.steps, int | np.integer) or self.steps < 1:
            raise PathError(f"Grid steps must be a positive integer, got {self.steps!r}")

    @property
    def step(self) -> float:
        """The step size `h = T / n`."""
        return self.horizon / self.steps

    def node(self, index: int) -> float:
        """Return `t_i`. The last node is the horizon itself."""
        self.check_index(index)
        if index == self.steps:
            return self.horizon
        return index * self.step

    @property
    def nodes(self) -> NDArray[np.float64]:
        """All grid nodes `t_0, ..., t_n`."""
        nodes = np.arange(self.steps + 1, dtype=np.float64) * self.step
        nodes[-1] = self.horizon
        return nodes

    def check_index(self, index: int) -> None:
        """Raise a `PathError` unless `0 <= index <= n`."""
        if not 0 <= index <= self.steps:
            raise PathError(f"Grid index {index} out of range 0..{self.steps}")


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """A `d`-dimensional path skeleton `omega_{t_0}, ..., omega_{t_k}` on a grid.

    Row `i` of `values` is `omega_{t_i}`; rows beyond `defined_upto` do not exist.
    The values array is read-only, extensions return new paths.
    """

    grid: TimeGrid
    values: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise PathError(f"Path values must be a non-empty (k+1) x d matrix, got shape {values.shape}")
        if values.shape[0] - 1 > self.grid.steps:
            raise PathError(
                f"Path defined up to index {values.shape[0] - 1}, beyond the grid's {self.grid.steps} steps"
            )
        if np.any(values[0] != 0.0):
            raise PathError("Paths start at the origin: row 0 must be the zero vector")
        if not np.all(np.isfinite(values)):
            raise PathError("Path values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def _trusted(cls, grid: TimeGrid, values: NDArray[np.float64]) -> DiscretePath:
        """Build a path from an already validated, read-only values array."""
        path = object.__new__(cls)
        object.__setattr__(path, "grid", grid)
        object.__setattr__(path, "values", values)
        return path

    def __repr__(self) -> str:
        return (
            f"DiscretePath(dim={self.dim}, defined_upto={self.defined_upto}, "
            f"current={self.current.tolist()})"
        )

    @property
    def dim(self) -> int:
        """Path dimension `d`."""
        return self.values.shape[1]

    @property
    def defined_upto(self) -> int:
        """The last grid index the path is defined at."""
        return self.values.shape[0] - 1

    @property
    def time(self) -> float:
        """The grid time of the last defined node."""
        return self.grid.node(self.defined_upto)

    @property
    def current(self) -> NDArray[np.float64]:
        """`omega_{t_k}` for the last defined index `k`."""
        return self.values[-1]

    @property
    def is_terminal(self) -> bool:
        """Whether the path is defined up to the horizon."""
        return self.defined_upto == self.grid.steps

    def prefix(self, index: int) -> DiscretePath:
        """Return the path restricted to the indices `0..index`."""
        self._check_defined(index)
        return DiscretePath._trusted(self.grid, self.values[: index + 1])

    def _check_defined(self, index: int) -> None:
        if not 0 <= index <= self.defined_upto:
            raise PathError(f"Index {index} out of range, path is defined up to {self.defined_upto}")


def make_grid(horizon: float, steps: int) -> TimeGrid:
    """Create the uniform grid `t_i = i * T / n`."""
    return TimeGrid(horizon=float(horizon), steps=steps)


def zero_path(grid: TimeGrid, dim: int = 1) -> DiscretePath:
    """The path sitting at the origin at `t_0`."""
    if dim < 1:
        raise PathError(f"Path dimension must be positive, got {dim}")
    return DiscretePath(grid, np.zeros((1, dim)))


def path_from_values(grid: TimeGrid, values: ArrayLike) -> DiscretePath:
    """Create a path from its skeleton values (a 1D array is read as a 1-dimensional path)."""
    array = np.asarray(values, dtype=np.float64)
    if array.ndim == 1:
        array = array[:, np.newaxis]
    return DiscretePath(grid, array)


def concat(path: DiscretePath, increment: ArrayLike) -> DiscretePath:
    """Extend the path by one grid step, `omega_{t_{k+1}} = omega_{t_k} + increment`."""
    if path.is_terminal:
        raise PathError(f"Cannot extend a terminal path (defined up to {path.defined_upto})")

    increment = np.asarray(increment, dtype=np.float64).reshape(-1)
    if increment.shape[0] != path.dim:
        raise PathError(
            f"Increment dimension {increment.shape[0]} does not match path dimension {path.dim}"
        )

    values = np.vstack((path.values, path.current + increment))
    values.setflags(write=False)
    return DiscretePath._trusted(path.grid, values)


def freeze(path: DiscretePath, index: int) -> DiscretePath:
    """Extend the path to `index` by holding its current value (the stopped path)."""
    path.grid.check_index(index)
    if index < path.defined_upto:
        raise PathError(f"Cannot freeze a path defined up to {path.defined_upto} at earlier index {index}")

    extra = index - path.defined_upto
    values = np.vstack((path.values, np.repeat(path.current[np.newaxis, :], extra, axis=0)))
    values.setflags(write=False)
    return DiscretePath._trusted(path.grid, values)


def sup_norm(path: DiscretePath, index: int) -> float:
    """`max_{0 <= i <= index} |omega_{t_i}|` with the Euclidean norm on R^d."""
    path._check_defined(index)
    return float(np.max(np.linalg.norm(path.values[: index + 1], axis=1)))


def _stopped_on(path: DiscretePath, index: int, times: NDArray[np.float64]) -> NDArray[np.float64]:
    """Values of the path stopped at `t_index`, read at `times` from the last grid node at or before."""
    own_nodes = path.grid.nodes[: index + 1]
    # Tolerate roundoff between grids sharing a horizon.
    positions = np.searchsorted(own_nodes, times + 1e-12 * path.grid.horizon, side="right") - 1
    return path.values[np.clip(positions, 0, index)]


def d_metric(index: int, path: DiscretePath, other_index: int, other: DiscretePath) -> float:
    """The pseudometric `sqrt|t - t'| + ||omega_{. ^ t} - omega'_{. ^ t'}||_T` on skeletons.

    Each path is frozen at its own index onward. When the grids differ, the stopped skeletons are
    compared on the union of both grids' nodes, each read at its last node at or before the time.
    """
    if not math.isclose(path.grid.horizon, other.grid.horizon, rel_tol=1e-12):
        raise PathError(
            f"Paths live on grids with different horizons: {path.grid.horizon} != {other.grid.horizon}"
        )
    if path.dim != other.dim:
        raise PathError(f"Paths have different dimensions: {path.dim} != {other.dim}")
    path._check_defined(index)
    other._check_defined(other_index)

    if path.grid == other.grid:
        times = path.grid.nodes
    else:
        times = np.union1d(path.grid.nodes, other.grid.nodes)

    difference = _stopped_on(path, index, times) - _stopped_on(other, other_index, times)
    time_distance = math.sqrt(abs(path.grid.node(index) - other.grid.node(other_index)))
    return time_distance + float(np.max(np.linalg.norm(difference, axis=1)))

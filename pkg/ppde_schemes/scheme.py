"""The monotone scheme: difference operators, the one-step operator and the backward recursion.

The one-step operator is

    T_h[phi] = D0 phi + h G(t, omega, D0 phi, D1 phi, D2 phi)

with `D0`, `D1`, `D2` built from the step-measure expectations of `phi`, and the approximation is

    u^h(t_n, omega) = g(omega),    u^h(t_i, omega) = T_h[u^h(t_{i+1}, .)]   (t_i, omega).

Only grid nodes are evaluated.
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING, Annotated, Any

import numpy as np
from pydantic import BaseModel, Field

from ppde_schemes.config import get_config
from ppde_schemes.functionals import GeneratorSpec, TerminalSpec, get_generator, get_terminal
from ppde_schemes.functionals.generator import eval_generator
from ppde_schemes.memo import StateKeyPolicy, get_policy
from ppde_schemes.models import PPDEError
from ppde_schemes.paths import concat, make_grid, zero_path
from ppde_schemes.stencils import (
    MeasureId,
    SchemeParams,
    all_measures,
    step_children,
    step_expectation,
)

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Callable, Hashable, Mapping

    from numpy.typing import NDArray

    from ppde_schemes.functionals.generator import Generator
    from ppde_schemes.functionals.terminal import Terminal
    from ppde_schemes.paths import DiscretePath, TimeGrid


LOGGER = logging.getLogger(__name__)


# Exceptions
class SchemeError(PPDEError, ValueError):
    """Invalid input to the scheme."""


class BudgetExceededError(PPDEError, RuntimeError):
    """The backward recursion would evaluate more nodes than the budget allows."""


# Data models
@dataclass(frozen=True)
class ProblemSpec:
    """A terminal-value problem for the PPDE on a uniform grid."""

    dim: int
    grid: TimeGrid
    generator: Generator
    terminal: Terminal

    def __post_init__(self) -> None:
        if self.generator.dim != self.dim:
            raise SchemeError(
                f"Generator dimension {self.generator.dim} does not match problem dimension {self.dim}"
            )
        try:
            self.terminal.check_dimension(self.dim)
        except ValueError as exc:
            raise SchemeError(str(exc)) from exc

    @classmethod
    def create(
        cls,
        generator: GeneratorSpec | str,
        terminal: TerminalSpec | str,
        *,
        dim: int = 1,
        horizon: float = 1.0,
        steps: int = 1,
        generator_parameters: dict[str, Any] | None = None,
        terminal_parameters: dict[str, Any] | None = None,
    ) -> ProblemSpec:
        """Build a problem from registry names or specs."""
        return cls(
            dim=dim,
            grid=make_grid(horizon, steps),
            generator=get_generator(generator, dim=dim, parameters=generator_parameters),
            terminal=get_terminal(terminal, parameters=terminal_parameters),
        )

    def with_steps(self, steps: int) -> ProblemSpec:
        """The same problem on a grid with `steps` steps."""
        return ProblemSpec(
            dim=self.dim,
            grid=make_grid(self.grid.horizon, steps),
            generator=self.generator,
            terminal=self.terminal,
        )

    def describe(self) -> str:
        """Short human-readable description."""
        return f"{self.generator} / {self.terminal} / T={self.grid.horizon} / n={self.grid.steps}"


@dataclass(frozen=True)
class DiffOps:
    """The difference operators `D0 in R`, `D1 in R^d`, `D2 in S^d`."""

    d0: float
    d1: NDArray[np.float64]
    d2: NDArray[np.float64]


class SolveResult(BaseModel):
    """Result of a backward recursion."""

    value: Annotated[float, Field(description="u^h at the root node.")]
    index: Annotated[int, Field(description="Grid index of the root node.")] = 0
    level_counts: Annotated[
        list[int], Field(description="Number of evaluated (non-memoized) nodes per grid level.")
    ]
    memo_policy: Annotated[str, Field(description="The state-key policy used.")]
    memo_hits: Annotated[int, Field(description="Number of memo table hits.")] = 0
    memo_entries: Annotated[int, Field(description="Number of memo table entries.")] = 0
    nodes: Annotated[int, Field(description="Total number of evaluated nodes.")]
    problem: Annotated[str, Field(description="Problem description.")]
    params: Annotated[SchemeParams, Field(description="The scheme parameters used.")]


def diff_operators(expectations: Mapping[MeasureId, float], params: SchemeParams, step: float) -> DiffOps:
    """Build `D0`, `D1`, `D2` from step-measure expectations."""
    d = params.dim
    missing = [str(measure) for measure in all_measures(d) if measure not in expectations]
    if missing:
        raise SchemeError(f"Missing expectations for measures: {', '.join(missing)}")

    d0 = expectations[MeasureId.zero()]
    mu, sigma = params.mu_array, params.sigma_array

    drift = np.array([expectations[MeasureId.drift(i)] for i in range(d)])
    d1 = (drift - d0) / (mu * step)

    diagonal = np.array([expectations[MeasureId.diagonal(i)] for i in range(d)])
    d2 = np.diag((diagonal - d0) / (sigma**2 * step / 2))
    for i in range(d):
        for j in range(d):
            if i != j:
                d2[i, j] = (expectations[MeasureId.cross(i, j)] - diagonal[i] - diagonal[j] + d0) / (
                    sigma[i] * sigma[j] * step
                )
    d2 = 0.5 * (d2 + d2.T)

    return DiffOps(d0=float(d0), d1=d1, d2=d2)


def step_expectations(
    params: SchemeParams,
    index: int,
    path: DiscretePath,
    functional: Callable[[DiscretePath], float],
) -> dict[MeasureId, float]:
    """Expectations of `phi` under every step measure from `(t_i, omega)`."""
    step = path.grid.step
    return {
        measure: step_expectation(measure, params, step, index, path, functional)
        for measure in all_measures(params.dim)
    }


def apply_step(
    problem: ProblemSpec,
    params: SchemeParams,
    index: int,
    path: DiscretePath,
    functional: Callable[[DiscretePath], float],
) -> float:
    """`T_h[phi]` at `(t_i, omega)`, for `phi` a functional of the path extended to `t_{i+1}`."""
    if params.dim != problem.dim:
        raise SchemeError(f"Scheme parameters have dimension {params.dim}, problem has {problem.dim}")
    if index >= problem.grid.steps:
        raise SchemeError(f"No step to take from the terminal index {index}")

    step = problem.grid.step
    ops = diff_operators(step_expectations(params, index, path, functional), params, step)
    return ops.d0 + step * eval_generator(problem.generator, index, path, ops.d0, ops.d1, ops.d2)


def distinct_branching(params: SchemeParams, step: float) -> tuple[int, int]:
    """Children per node, counted with and without duplicate increments across stencils."""
    increments = np.vstack(
        [step_children(measure, params, step).increments for measure in all_measures(params.dim)]
    )
    return increments.shape[0], np.unique(increments, axis=0).shape[0]


def tree_size(branching: int, levels: int) -> int:
    """Number of nodes of a full tree with the given branching and number of levels below the root."""
    return sum(branching**level for level in range(levels + 1))


@dataclass
class _Statistics:
    level_counts: list[int]
    nodes: int = 0
    hits: int = 0

    def merge(self, other: _Statistics) -> None:
        self.nodes += other.nodes
        self.hits += other.hits
        self.level_counts = [mine + theirs for mine, theirs in zip(self.level_counts, other.level_counts)]


class Solver:
    """Depth-first backward recursion with an optional memo table and a node budget.

    With more than one thread, every child of the root is evaluated with its own copy of the memo
    table and its own counters. Tables and counters are merged in child order afterwards, so the
    reported statistics only depend on the configuration. States shared between root children are
    then counted once per child.
    """

    def __init__(
        self,
        problem: ProblemSpec,
        params: SchemeParams,
        memo: StateKeyPolicy | str | None = None,
        *,
        budget: int | None = None,
        threads: int | None = None,
    ) -> None:
        if params.dim != problem.dim:
            raise SchemeError(f"Scheme parameters have dimension {params.dim}, problem has {problem.dim}")

        config = get_config()

        self.problem = problem
        self.params = params
        self.policy = get_policy(memo)
        self.budget = budget if budget is not None else config.node_budget
        self.threads = threads if threads is not None else config.threads
        self._decimals = config.memo_key_decimals
        self._memo: dict[tuple[int, Hashable], float] = {}
        self._spent = 0
        self._lock = threading.Lock()

        if not self.policy.is_sound(problem.terminal.statistic, problem.generator.path_dependent):
            LOGGER.warning(
                "State-key policy %s is not declared sound for terminal %s (statistic %s); "
                "results may be wrong.",
                self.policy,
                problem.terminal,
                problem.terminal.statistic,
            )

    def solve(self) -> SolveResult:
        """`u^h(0, 0)`."""
        return self.solve_at(0, zero_path(self.problem.grid, self.problem.dim))

    def evaluate(self, index: int, path: DiscretePath) -> float:
        """`u^h(t_i, omega)`."""
        return self.solve_at(index, path).value

    def solve_at(self, index: int, path: DiscretePath) -> SolveResult:
        """Run the recursion rooted at `(t_i, omega)`."""
        grid = self.problem.grid
        if path.grid != grid:
            raise SchemeError("Path grid does not match the problem grid")
        if path.dim != self.problem.dim:
            raise SchemeError(
                f"Path dimension {path.dim} does not match problem dimension {self.problem.dim}"
            )
        grid.check_index(index)
        if index > path.defined_upto:
            raise SchemeError(
                f"Path is defined up to {path.defined_upto}, cannot evaluate at index {index}"
            )

        self._preflight(grid.steps - index)

        self._spent = 0
        stats = _Statistics(level_counts=[0] * (grid.steps + 1))
        root = path.prefix(index)
        if self.threads > 1 and index < grid.steps:
            value = self._parallel_root(index, root, stats)
        else:
            value = self._value(index, root, stats, self._memo)

        LOGGER.debug(
            "Solved %s at index %d with policy %s: value=%r nodes=%d hits=%d",
            self.problem.describe(),
            index,
            self.policy,
            value,
            stats.nodes,
            stats.hits,
        )

        return SolveResult(
            value=value,
            index=index,
            level_counts=stats.level_counts,
            memo_policy=self.policy.value,
            memo_hits=stats.hits,
            memo_entries=len(self._memo),
            nodes=stats.nodes,
            problem=self.problem.describe(),
            params=self.params,
        )

    def _preflight(self, levels: int) -> None:
        """Fail before traversing when a non-recombining tree is known to exceed the budget."""
        if self.policy not in (StateKeyPolicy.NONE, StateKeyPolicy.FULL_PREFIX):
            return

        all_children, distinct_children = distinct_branching(self.params, self.problem.grid.step)
        branching = all_children if self.policy == StateKeyPolicy.NONE else distinct_children
        size = tree_size(branching, levels)
        if size > self.budget:
            raise BudgetExceededError(
                f"Tree with branching {branching} over {levels} levels has {size} nodes, "
                f"exceeding the node budget of {self.budget}"
            )

    def _count(self, index: int, stats: _Statistics) -> None:
        stats.nodes += 1
        stats.level_counts[index] += 1
        with self._lock:
            self._spent += 1
            if self._spent > self.budget:
                raise BudgetExceededError(
                    f"Backward recursion exceeded the node budget of {self.budget} "
                    f"(at level {index} of {self.problem.grid.steps})"
                )

    def _value(
        self, index: int, path: DiscretePath, stats: _Statistics, memo: dict[tuple[int, Hashable], float]
    ) -> float:
        key: tuple[int, Hashable] | None = None
        if self.policy.memoizes:
            key = (index, self.policy.key(index, path, self._decimals))
            cached = memo.get(key)
            if cached is not None:
                stats.hits += 1
                return cached

        self._count(index, stats)

        if index == self.problem.grid.steps:
            value = self.problem.terminal.evaluate(path)
        else:
            value = apply_step(
                self.problem,
                self.params,
                index,
                path,
                lambda child: self._value(index + 1, child, stats, memo),
            )

        if key is not None:
            memo[key] = value
        return value

    def _parallel_root(self, index: int, root: DiscretePath, stats: _Statistics) -> float:
        """Evaluate the root's children on a thread pool, then apply the root step."""
        self._count(index, stats)

        step = self.problem.grid.step
        children = [
            concat(root, increment)
            for measure in all_measures(self.params.dim)
            for increment in step_children(measure, self.params, step).increments
        ]
        tasks = [
            (_Statistics(level_counts=[0] * len(stats.level_counts)), dict(self._memo)) for _ in children
        ]

        def evaluate_child(child: DiscretePath, task: tuple[_Statistics, dict]) -> float:
            return self._value(index + 1, child, *task)

        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            values = list(pool.map(evaluate_child, children, tasks))

        for child_stats, child_memo in tasks:
            stats.merge(child_stats)
            for key, child_value in child_memo.items():
                self._memo.setdefault(key, child_value)

        table = {child.values.tobytes(): value for child, value in zip(children, values)}
        value = apply_step(
            self.problem, self.params, index, root, lambda child: table[child.values.tobytes()]
        )

        if self.policy.memoizes:
            self._memo[(index, self.policy.key(index, root, self._decimals))] = value
        return value


def solve(
    problem: ProblemSpec,
    params: SchemeParams,
    memo: StateKeyPolicy | str | None = None,
    *,
    budget: int | None = None,
    threads: int | None = None,
) -> SolveResult:
    """`u^h(0, 0)` by depth-first backward recursion."""
    return Solver(problem, params, memo, budget=budget, threads=threads).solve()


def evaluate_uh(
    problem: ProblemSpec,
    params: SchemeParams,
    index: int,
    path: DiscretePath,
    memo: StateKeyPolicy | str | None = None,
    *,
    budget: int | None = None,
) -> float:
    """`u^h(t_i, omega)` by the same recursion rooted at `(t_i, omega)`."""
    return Solver(problem, params, memo, budget=budget, threads=1).evaluate(index, path)


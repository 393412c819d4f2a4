"""State-key policies for memoizing the backward recursion.

A policy maps `(t_i, omega)` to a key such that `u^h(t_i, .)` is a function of the key. The path
tree does not recombine by itself; a policy declares the sufficient statistic under which it does.
Soundness is a declared contract, checked against the brute-force oracle in the test suite.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from ppde_schemes.functionals.terminal import PathStatistic
from ppde_schemes.models import RegistryError, StrEnum

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Hashable

    from ppde_schemes.paths import DiscretePath


class StateKeyPolicy(StrEnum):
    """Shipped state-key policies. `none` disables memoization."""

    NONE = "none"
    FULL_PREFIX = "full-prefix"
    MARKOV = "markov"
    RUNNING_SUM = "markov+running-sum"
    RUNNING_MAX = "markov+running-max"
    TIME_ONLY = "time-only"

    @property
    def memoizes(self) -> bool:
        """Whether the policy keeps a memo table at all."""
        return self != StateKeyPolicy.NONE

    @property
    def sound_for(self) -> frozenset[PathStatistic]:
        """The terminal path statistics this policy is declared sound for."""
        statistics = {
            StateKeyPolicy.NONE: set(PathStatistic),
            StateKeyPolicy.FULL_PREFIX: set(PathStatistic),
            StateKeyPolicy.MARKOV: {PathStatistic.NONE, PathStatistic.CURRENT},
            StateKeyPolicy.RUNNING_SUM: {
                PathStatistic.NONE,
                PathStatistic.CURRENT,
                PathStatistic.RUNNING_SUM,
            },
            StateKeyPolicy.RUNNING_MAX: {
                PathStatistic.NONE,
                PathStatistic.CURRENT,
                PathStatistic.RUNNING_MAX,
            },
            StateKeyPolicy.TIME_ONLY: {PathStatistic.NONE},
        }[self]
        return frozenset(statistics)

    def is_sound(self, statistic: PathStatistic, path_dependent_generator: bool = False) -> bool:
        """Whether memoizing with this policy is declared sound for the problem."""
        if path_dependent_generator and self not in (StateKeyPolicy.NONE, StateKeyPolicy.FULL_PREFIX):
            return False
        return statistic in self.sound_for

    def key(self, index: int, path: DiscretePath, decimals: int = 13) -> Hashable:
        """The state key of the path stopped at `t_index`.

        Statistics are rounded to `decimals` so that paths reaching the same state through
        different orders of increments share a key despite floating-point roundoff.
        """
        values = path.values[: index + 1]

        if self == StateKeyPolicy.FULL_PREFIX:
            return values.tobytes()
        if self == StateKeyPolicy.TIME_ONLY:
            return ()

        parts = [values[-1]]
        if self == StateKeyPolicy.RUNNING_SUM:
            parts.append(values[1:].sum(axis=0))
        elif self == StateKeyPolicy.RUNNING_MAX:
            parts.append(values.max(axis=0))
            parts.append(np.abs(values).max(axis=0))
        elif self != StateKeyPolicy.MARKOV:
            raise RegistryError(f"Policy {self} does not build keys")

        # Adding 0.0 turns -0.0 into 0.0.
        return tuple((np.round(np.concatenate(parts), decimals) + 0.0).tolist())


def get_policy(policy: StateKeyPolicy | str | None) -> StateKeyPolicy:
    """Resolve a policy name; `None` means no memoization."""
    if policy is None:
        return StateKeyPolicy.NONE

    try:
        return StateKeyPolicy(policy)
    except ValueError as exc:
        raise RegistryError(
            f"Unknown state-key policy: {policy}\nValid policies:\n"
            + "\n".join(f" - {_}" for _ in StateKeyPolicy.__members__.values())
        ) from exc

"""Test the state-key policies."""

from __future__ import annotations

from typing import TYPE_CHECKING

import pytest

if TYPE_CHECKING:
    from ppde_schemes.paths import TimeGrid


def test_keys(grid: TimeGrid) -> None:
    """Each policy keeps its declared statistic only."""
    from ppde_schemes.memo import StateKeyPolicy
    from ppde_schemes.paths import path_from_values

    path = path_from_values(grid, [0.0, 1.0, -2.0, 0.5])

    assert StateKeyPolicy.TIME_ONLY.key(3, path) == ()
    assert StateKeyPolicy.MARKOV.key(3, path) == (0.5,)
    assert StateKeyPolicy.RUNNING_SUM.key(3, path) == (0.5, -0.5)
    assert StateKeyPolicy.RUNNING_MAX.key(3, path) == (0.5, 1.0, 2.0)
    assert StateKeyPolicy.MARKOV.key(1, path) == (1.0,)


def test_keys_merge_reordered_increments(grid: TimeGrid) -> None:
    """Paths reaching the same state in a different order share a key despite roundoff."""
    from ppde_schemes.memo import StateKeyPolicy
    from ppde_schemes.paths import concat, zero_path

    first = concat(concat(concat(zero_path(grid), 0.1), 0.2), 0.3)
    second = concat(concat(concat(zero_path(grid), 0.3), 0.2), 0.1)

    assert StateKeyPolicy.MARKOV.key(3, first) == StateKeyPolicy.MARKOV.key(3, second)
    assert StateKeyPolicy.FULL_PREFIX.key(3, first) != StateKeyPolicy.FULL_PREFIX.key(3, second)


def test_negative_zero(grid: TimeGrid) -> None:
    """`-0.0` and `0.0` give the same key."""
    from ppde_schemes.memo import StateKeyPolicy
    from ppde_schemes.paths import path_from_values

    assert StateKeyPolicy.MARKOV.key(1, path_from_values(grid, [0.0, -0.0])) == StateKeyPolicy.MARKOV.key(
        1, path_from_values(grid, [0.0, 0.0])
    )


@pytest.mark.parametrize(
    ("policy", "statistic", "path_dependent", "sound"),
    [
        ("markov", "current", False, True),
        ("markov", "running-sum", False, False),
        ("markov+running-sum", "running-sum", False, True),
        ("markov+running-max", "running-max", False, True),
        ("time-only", "current", False, False),
        ("time-only", "none", False, True),
        ("full-prefix", "full", True, True),
        ("markov", "current", True, False),
    ],
)
def test_soundness(policy: str, statistic: str, path_dependent: bool, sound: bool) -> None:
    """Declared soundness per terminal statistic and generator path dependence."""
    from ppde_schemes.functionals.terminal import PathStatistic
    from ppde_schemes.memo import get_policy

    assert get_policy(policy).is_sound(PathStatistic(statistic), path_dependent) is sound


def test_get_policy() -> None:
    """`None` disables memoization, unknown names list the valid ones."""
    from ppde_schemes.memo import StateKeyPolicy, get_policy
    from ppde_schemes.models import RegistryError

    assert get_policy(None) is StateKeyPolicy.NONE
    assert not get_policy(None).memoizes

    with pytest.raises(RegistryError, match="Valid policies:\n - none"):
        get_policy("markov+running-min")

"""Test the registered generators and their derivative bundles."""

from __future__ import annotations

from typing import TYPE_CHECKING

import pytest

if TYPE_CHECKING:
    from ppde_schemes.paths import TimeGrid


def test_heat(grid: TimeGrid) -> None:
    """`G = 1/2 tr(gamma)` with constant derivatives."""
    import numpy as np

    from ppde_schemes.functionals import get_generator
    from ppde_schemes.functionals.generator import eval_generator, generator_derivs
    from ppde_schemes.paths import zero_path

    generator = get_generator("heat", dim=2)
    path = zero_path(grid, dim=2)
    gamma = np.array([[2.0, 0.5], [0.5, 4.0]])

    assert eval_generator(generator, 0, path, 7.0, [1.0, 1.0], gamma) == 3.0
    bundle = generator_derivs(generator, 0, path, 7.0, [1.0, 1.0], gamma)
    assert bundle.method == "analytic"
    assert bundle.dy == 0.0
    assert bundle.dz.tolist() == [0.0, 0.0]
    assert bundle.dgamma.tolist() == [[0.5, 0.0], [0.0, 0.5]]
    assert generator.lipschitz_constant == 1.0


def test_semilinear(grid: TimeGrid) -> None:
    """The semilinear generator adds `lam * y`."""
    from ppde_schemes.functionals import get_generator
    from ppde_schemes.functionals.generator import eval_generator, generator_derivs
    from ppde_schemes.paths import zero_path

    generator = get_generator("semilinear-linear-y", parameters={"lam": 2.0})
    path = zero_path(grid)

    assert eval_generator(generator, 0, path, 3.0, [0.0], [[1.0]]) == 6.5
    assert generator_derivs(generator, 0, path, 3.0, [0.0], [[1.0]]).dy == 2.0


def test_drift(grid: TimeGrid) -> None:
    """The drift generator adds `b . z` and rejects negative or mis-sized drifts."""
    from ppde_schemes.functionals import get_generator
    from ppde_schemes.functionals.generator import eval_generator, generator_derivs
    from ppde_schemes.models import RegistryError
    from ppde_schemes.paths import zero_path

    generator = get_generator("drift", dim=2, parameters={"drift": (1.0, 0.5)})
    path = zero_path(grid, dim=2)

    assert eval_generator(generator, 0, path, 0.0, [2.0, 2.0], [[0.0, 0.0], [0.0, 0.0]]) == 3.0
    assert generator_derivs(generator, 0, path, 0.0, [0.0, 0.0], [[0.0, 0.0], [0.0, 0.0]]).dz.tolist() == [
        1.0,
        0.5,
    ]

    with pytest.raises(RegistryError):
        get_generator("drift", parameters={"drift": (-1.0,)})
    with pytest.raises(RegistryError):
        get_generator("drift", dim=2, parameters={"drift": (1.0,)})


@pytest.mark.parametrize(("gamma", "expected"), [(2.0, 1.0), (-2.0, -0.25), (0.0, 0.0)])
def test_g_heat_values(grid: TimeGrid, gamma: float, expected: float) -> None:
    """`G(gamma) = 1/2 sup_{sigma in [0.5, 1]} sigma^2 gamma`."""
    from ppde_schemes.functionals import get_generator
    from ppde_schemes.functionals.generator import eval_generator
    from ppde_schemes.paths import zero_path

    generator = get_generator("g-heat", parameters={"sigma_low": 0.5, "sigma_high": 1.0})

    assert eval_generator(generator, 0, zero_path(grid), 0.0, [0.0], [[gamma]]) == expected


def test_g_heat_kink(grid: TimeGrid) -> None:
    """At the kink the upper envelope derivative is used and reported."""
    from ppde_schemes.functionals import get_generator
    from ppde_schemes.functionals.generator import generator_derivs
    from ppde_schemes.paths import zero_path

    generator = get_generator("g-heat", parameters={"sigma_low": 0.5, "sigma_high": 1.0})
    path = zero_path(grid)

    at_kink = generator_derivs(generator, 0, path, 0.0, [0.0], [[0.0]])
    assert at_kink.dgamma[0, 0] == 0.5
    assert at_kink.notes

    below = generator_derivs(generator, 0, path, 0.0, [0.0], [[-1.0]])
    assert below.dgamma[0, 0] == 0.125
    assert not below.notes


def test_g_heat_parameters() -> None:
    """The volatility bounds must be ordered."""
    from ppde_schemes.functionals import get_generator
    from ppde_schemes.models import RegistryError

    with pytest.raises(RegistryError, match="sigma_low"):
        get_generator("g-heat", parameters={"sigma_low": 2.0, "sigma_high": 1.0})


@pytest.mark.parametrize(
    ("name", "parameters"),
    [
        ("heat", None),
        ("semilinear-linear-y", {"lam": -0.7}),
        ("drift", {"drift": (0.3, 1.2)}),
        ("g-heat", {"sigma_low": 0.2, "sigma_high": 0.9}),
    ],
)
def test_numeric_derivatives_match_analytic(grid: TimeGrid, name: str, parameters: dict | None) -> None:
    """Central differences reproduce the analytic bundle away from kinks."""
    import numpy as np

    from ppde_schemes.functionals import get_generator
    from ppde_schemes.functionals.generator import generator_derivs
    from ppde_schemes.paths import zero_path

    generator = get_generator(name, dim=2, parameters=parameters)
    path = zero_path(grid, dim=2)
    z = np.array([0.4, -1.1])
    gamma = np.array([[1.5, 0.3], [0.3, -0.8]])

    analytic = generator_derivs(generator, 0, path, 0.9, z, gamma)
    numeric = generator_derivs(generator, 0, path, 0.9, z, gamma, force_numeric=True)

    assert numeric.method.startswith("central-difference")
    assert numeric.dy == pytest.approx(analytic.dy, abs=1e-6)
    assert numeric.dz == pytest.approx(analytic.dz, abs=1e-6)
    assert numeric.dgamma == pytest.approx(analytic.dgamma, abs=1e-6)


def test_generator_argument_checks(grid: TimeGrid) -> None:
    """Asymmetric gamma and mis-sized z are rejected."""
    from ppde_schemes.functionals import get_generator
    from ppde_schemes.functionals.generator import FunctionalError, eval_generator
    from ppde_schemes.paths import zero_path

    generator = get_generator("heat", dim=2)
    path = zero_path(grid, dim=2)

    with pytest.raises(FunctionalError, match="symmetric"):
        eval_generator(generator, 0, path, 0.0, [0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(FunctionalError, match="dimension"):
        eval_generator(generator, 0, path, 0.0, [0.0], [[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(FunctionalError, match="out of range"):
        eval_generator(generator, 3, path, 0.0, [0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])


_REGISTERED = [
    ("heat", None),
    ("semilinear-linear-y", {"lam": -0.7}),
    ("drift", {"drift": (0.3, 1.2)}),
    ("g-heat", {"sigma_low": 0.2, "sigma_high": 0.9}),
]


@pytest.mark.parametrize(("name", "parameters"), _REGISTERED)
def test_parabolicity(grid: TimeGrid, name: str, parameters: dict | None) -> None:
    """`G(gamma1) <= G(gamma2)` whenever `gamma2 - gamma1` is positive semidefinite."""
    import numpy as np

    from ppde_schemes.functionals import get_generator
    from ppde_schemes.functionals.generator import eval_generator
    from ppde_schemes.paths import zero_path

    generator = get_generator(name, dim=2, parameters=parameters)
    path = zero_path(grid, dim=2)
    rng = np.random.default_rng(11)

    for _ in range(100):
        y = rng.normal()
        z = rng.normal(size=2)
        root = rng.normal(size=(2, 2))
        gamma1 = root + root.T
        factor = rng.normal(size=(2, 2))
        gamma2 = gamma1 + factor @ factor.T
        gamma2 = (gamma2 + gamma2.T) / 2

        lower = eval_generator(generator, 0, path, y, z, gamma1)
        upper = eval_generator(generator, 0, path, y, z, gamma2)
        assert lower <= upper + 1e-12


@pytest.mark.parametrize(("name", "parameters"), _REGISTERED)
def test_numeric_derivatives_at_random_points(grid: TimeGrid, name: str, parameters: dict | None) -> None:
    """Central differences match the analytic bundle over random points off the kinks."""
    import numpy as np

    from ppde_schemes.functionals import get_generator
    from ppde_schemes.functionals.generator import generator_derivs
    from ppde_schemes.paths import zero_path

    generator = get_generator(name, dim=2, parameters=parameters)
    path = zero_path(grid, dim=2)
    rng = np.random.default_rng(5)

    for _ in range(100):
        y = rng.normal()
        z = rng.normal(size=2)
        diagonal = rng.uniform(0.2, 2.0, size=2) * rng.choice([-1.0, 1.0], size=2)
        off = rng.normal()
        gamma = np.array([[diagonal[0], off], [off, diagonal[1]]])

        analytic = generator_derivs(generator, 0, path, y, z, gamma)
        numeric = generator_derivs(generator, 0, path, y, z, gamma, force_numeric=True, step=1e-2)

        assert numeric.dy == pytest.approx(analytic.dy, abs=1e-9)
        assert numeric.dz == pytest.approx(analytic.dz, abs=1e-9)
        assert numeric.dgamma == pytest.approx(analytic.dgamma, abs=1e-9)


def test_numeric_derivatives_are_second_order(grid: TimeGrid) -> None:
    """Halving the difference step divides the error of a smooth generator by four."""
    import numpy as np

    from ppde_schemes.functionals.generator import DerivativeBundle, generator_derivs
    from ppde_schemes.functionals.generators import HeatGenerator
    from ppde_schemes.paths import zero_path

    class Cubic(HeatGenerator):
        name = "cubic"

        def _evaluate(self, time, path, y, z, gamma):  # noqa: ANN001, ANN202, ARG002
            cubes = float(np.sum(z**3)) / 3 + float(np.sum(np.diag(gamma) ** 3)) / 6
            return 0.5 * float(np.trace(gamma)) + y**3 / 3 + cubes

        def analytic_derivatives(self, time, path, y, z, gamma):  # noqa: ANN001, ANN202, ARG002
            return DerivativeBundle(
                dy=y**2,
                dz=z**2,
                dgamma=np.diag(0.5 + np.diag(gamma) ** 2 / 2),
                time=time,
                y=y,
                z=z,
                gamma=gamma,
                method="analytic",
            )

    generator = Cubic(dim=2)
    path = zero_path(grid, dim=2)
    rng = np.random.default_rng(3)

    def error(bundle: DerivativeBundle, exact: DerivativeBundle) -> float:
        return max(
            abs(bundle.dy - exact.dy),
            float(np.max(np.abs(bundle.dz - exact.dz))),
            float(np.max(np.abs(bundle.dgamma - exact.dgamma))),
        )

    for _ in range(100):
        y = rng.normal()
        z = rng.normal(size=2)
        root = rng.normal(size=(2, 2))
        gamma = root + root.T

        exact = generator_derivs(generator, 0, path, y, z, gamma)
        coarse, fine = (
            error(generator_derivs(generator, 0, path, y, z, gamma, force_numeric=True, step=step), exact)
            for step in (1e-2, 5e-3)
        )

        assert coarse == pytest.approx(1e-4 / 3, rel=1e-3)
        assert coarse / fine == pytest.approx(4.0, rel=1e-2)

"""Terminal conditions, generators and smooth test functionals.

Currently registered generators:

- heat
- semilinear-linear-y
- drift
- g-heat

Currently registered terminal conditions:

- constant, coordinate, square, average, max, call

Custom generators and terminals are registered in code with `register_generator()` and
`register_terminal()`; configs reference them by name.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Annotated, Any

from pydantic import BaseModel, ConfigDict, Field

from ppde_schemes.models import RegistryError, StrEnum

if TYPE_CHECKING:  # pragma: no cover
    from ppde_schemes.functionals.generator import Generator
    from ppde_schemes.functionals.terminal import Terminal


_CUSTOM_GENERATORS: dict[str, type[Generator]] = {}
_CUSTOM_TERMINALS: dict[str, type[Terminal]] = {}


class Generators(StrEnum):
    """Registered generators."""

    HEAT = "heat"
    SEMILINEAR = "semilinear-linear-y"
    DRIFT = "drift"
    G_HEAT = "g-heat"

    def get_class(self) -> type[Generator]:
        """Get the generator class."""
        from ppde_schemes.functionals import generators

        return {
            Generators.HEAT: generators.HeatGenerator,
            Generators.SEMILINEAR: generators.SemilinearGenerator,
            Generators.DRIFT: generators.DriftGenerator,
            Generators.G_HEAT: generators.GHeatGenerator,
        }[self]


class Terminals(StrEnum):
    """Registered terminal conditions."""

    CONSTANT = "constant"
    COORDINATE = "coordinate"
    SQUARE = "square"
    AVERAGE = "average"
    MAX = "max"
    CALL = "call"

    def get_class(self) -> type[Terminal]:
        """Get the terminal class."""
        from ppde_schemes.functionals import terminals

        return {
            Terminals.CONSTANT: terminals.ConstantTerminal,
            Terminals.COORDINATE: terminals.CoordinateTerminal,
            Terminals.SQUARE: terminals.SquareTerminal,
            Terminals.AVERAGE: terminals.AverageTerminal,
            Terminals.MAX: terminals.MaxTerminal,
            Terminals.CALL: terminals.CallTerminal,
        }[self]


class GeneratorSpec(BaseModel):
    """Reference to a registered generator."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: Annotated[str, Field(description="Registry name of the generator.")]
    parameters: Annotated[
        dict[str, Any], Field(description="Generator parameters, validated by the generator.")
    ] = {}


class TerminalSpec(BaseModel):
    """Reference to a registered terminal condition."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: Annotated[str, Field(description="Registry name of the terminal condition.")]
    parameters: Annotated[
        dict[str, Any], Field(description="Terminal parameters, validated by the terminal.")
    ] = {}


def generator_names() -> list[str]:
    """All resolvable generator names."""
    return [_.value for _ in Generators] + sorted(_CUSTOM_GENERATORS)


def terminal_names() -> list[str]:
    """All resolvable terminal names."""
    return [_.value for _ in Terminals] + sorted(_CUSTOM_TERMINALS)


def register_generator(name: str, generator_class: type[Generator]) -> None:
    """Register a custom generator under `name`."""
    if name in generator_names():
        raise RegistryError(f"Generator name already registered: {name}")
    _CUSTOM_GENERATORS[name] = generator_class


def register_terminal(name: str, terminal_class: type[Terminal]) -> None:
    """Register a custom terminal condition under `name`."""
    if name in terminal_names():
        raise RegistryError(f"Terminal name already registered: {name}")
    _CUSTOM_TERMINALS[name] = terminal_class


def unregister(name: str) -> None:
    """Remove a custom generator or terminal registration."""
    _CUSTOM_GENERATORS.pop(name, None)
    _CUSTOM_TERMINALS.pop(name, None)


def get_generator(
    generator: GeneratorSpec | Generators | str,
    dim: int = 1,
    parameters: dict[str, Any] | None = None,
) -> Generator:
    """Get a generator instance."""
    if isinstance(generator, GeneratorSpec):
        parameters = {**generator.parameters, **(parameters or {})}
        generator = generator.name

    if generator in _CUSTOM_GENERATORS:
        generator_class = _CUSTOM_GENERATORS[generator]
    else:
        try:
            generator_class = Generators(generator).get_class()
        except ValueError as exc:
            raise RegistryError(
                f"Unknown generator: {generator}\nValid generators:\n"
                + "\n".join(f" - {_}" for _ in generator_names())
            ) from exc

    try:
        return generator_class(dim=dim, parameters=parameters or None)
    except ValueError as exc:
        raise RegistryError(f"Invalid parameters for generator {generator}: {exc}") from exc


def get_terminal(
    terminal: TerminalSpec | Terminals | str,
    parameters: dict[str, Any] | None = None,
) -> Terminal:
    """Get a terminal condition instance."""
    if isinstance(terminal, TerminalSpec):
        parameters = {**terminal.parameters, **(parameters or {})}
        terminal = terminal.name

    if terminal in _CUSTOM_TERMINALS:
        terminal_class = _CUSTOM_TERMINALS[terminal]
    else:
        try:
            terminal_class = Terminals(terminal).get_class()
        except ValueError as exc:
            raise RegistryError(
                f"Unknown terminal condition: {terminal}\nValid terminal conditions:\n"
                + "\n".join(f" - {_}" for _ in terminal_names())
            ) from exc

    try:
        return terminal_class(parameters=parameters or None)
    except ValueError as exc:
        raise RegistryError(f"Invalid parameters for terminal condition {terminal}: {exc}") from exc

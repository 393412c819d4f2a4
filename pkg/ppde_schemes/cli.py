"""Command line interface: `ppde solve|check|converge|consistency --config PATH|-`.

The run configuration is a single JSON (or YAML) document with the sections `problem`, `scheme`
and `run`. Flags override the scalar run settings.

Exit codes: 0 success, 1 internal error, 2 invalid configuration, 3 node budget exceeded,
4 monotonicity check failed. Every error prints one line `error: <message>` to standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import TYPE_CHECKING, Annotated, Any, Literal, NoReturn

import yaml
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from ppde_schemes import __version__
from ppde_schemes.config import get_config
from ppde_schemes.functionals import GeneratorSpec, TerminalSpec, get_generator, get_terminal
from ppde_schemes.functionals.smooth import SmoothFunctional
from ppde_schemes.harness import ConsistencyAnchor, consistency_sweep, convergence_study, emit
from ppde_schemes.memo import get_policy
from ppde_schemes.models import ConfigError, PPDEError
from ppde_schemes.monotonicity import ParameterSearchError, SampleSpec, check_monotonicity, suggest_params
from ppde_schemes.paths import make_grid
from ppde_schemes.scheme import BudgetExceededError, ProblemSpec, Solver
from ppde_schemes.stencils import SchemeParams

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Sequence


LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_CHECK_FAILED = 4

DEFAULT_CONSISTENCY_STEPS = (2.0**-3, 2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7)


def _as_tuple(value: Any) -> Any:
    if isinstance(value, (int, float)):
        return (value,)
    return value


PositiveFloats = Annotated[
    tuple[Annotated[float, Field(gt=0)], ...], BeforeValidator(_as_tuple), Field(min_length=1)
]


# Run configuration
class ProblemConfig(BaseModel):
    """The `problem` section."""

    model_config = ConfigDict(extra="forbid")

    dim: Annotated[int, Field(description="Dimension d of the state.", ge=1)] = 1
    horizon: Annotated[float, Field(description="Time horizon T.", gt=0)] = 1.0
    generator: GeneratorSpec
    terminal: TerminalSpec

    @model_validator(mode="after")
    def _resolve(self) -> ProblemConfig:
        get_generator(self.generator, dim=self.dim)
        get_terminal(self.terminal).check_dimension(self.dim)
        return self

    def build(self, steps: int) -> ProblemSpec:
        """The problem on a grid with `steps` steps."""
        return ProblemSpec(
            dim=self.dim,
            grid=make_grid(self.horizon, steps),
            generator=get_generator(self.generator, dim=self.dim),
            terminal=get_terminal(self.terminal),
        )


class SchemeConfig(BaseModel):
    """The `scheme` section. A single `mu` or `sigma` applies to every coordinate."""

    model_config = ConfigDict(extra="forbid")

    mu: PositiveFloats = (1.0,)
    sigma: PositiveFloats = (1.0,)
    quad_order: Annotated[int | None, Field(description="Gauss-Hermite order q.", ge=1)] = None
    epsilon0: Annotated[float, Field(description="Monotonicity margin.", gt=0, lt=1)] = 0.1
    memo: Annotated[str, Field(description="State-key policy name.")] = "none"
    budget: Annotated[int | None, Field(description="Node budget.", ge=1)] = None

    @field_validator("memo")
    @classmethod
    def _known_policy(cls, value: str) -> str:
        return get_policy(value).value

    def to_params(self, dim: int) -> SchemeParams:
        """Scheme parameters for dimension `dim`."""
        mu = self.mu * dim if len(self.mu) == 1 else self.mu
        sigma = self.sigma * dim if len(self.sigma) == 1 else self.sigma
        if len(mu) != dim or len(sigma) != dim:
            raise ConfigError(f"scheme.mu and scheme.sigma need 1 or {dim} entries")
        return SchemeParams(
            mu=mu,
            sigma=sigma,
            quad_order=self.quad_order or get_config().quad_order,
            epsilon0=self.epsilon0,
        )


class RunSection(BaseModel):
    """The `run` section."""

    model_config = ConfigDict(extra="forbid")

    n: Annotated[
        tuple[Annotated[int, Field(ge=1)], ...],
        BeforeValidator(_as_tuple),
        Field(description="Grid steps.", min_length=1),
    ] = (4,)
    seed: int = 0
    out: Annotated[str | None, Field(description="Output path; standard output if unset.")] = None
    format: Literal["csv", "json"] | None = None
    functional: SmoothFunctional | None = None
    h: Annotated[
        tuple[Annotated[float, Field(gt=0)], ...] | None,
        BeforeValidator(_as_tuple),
        Field(description="Step sizes."),
    ] = None
    anchor: ConsistencyAnchor = ConsistencyAnchor()
    sample: SampleSpec = SampleSpec()


class RunConfig(BaseModel):
    """A complete run configuration."""

    model_config = ConfigDict(extra="forbid")

    problem: ProblemConfig
    scheme: SchemeConfig = SchemeConfig()
    run: RunSection = RunSection()

    @property
    def params(self) -> SchemeParams:
        """Scheme parameters for the configured dimension."""
        return self.scheme.to_params(self.problem.dim)

    @property
    def steps(self) -> int:
        """The single grid size of a solve or check run."""
        if len(self.run.n) != 1:
            raise ConfigError(f"run.n must be a single grid size here, got {list(self.run.n)}")
        return self.run.n[0]


def _location(location: Sequence[int | str]) -> str:
    text = ""
    for part in location:
        text += f"[{part}]" if isinstance(part, int) else (f".{part}" if text else str(part))
    return text


def describe_validation_error(error: ValidationError) -> str:
    """One line naming every offending field by its dotted location."""
    return "; ".join(f"{_location(_['loc']) or 'config'}: {_['msg']}" for _ in error.errors())


def load_config(source: str) -> RunConfig:
    """Load a run configuration from a path, or from standard input for `-`."""
    try:
        if source == "-":
            text, suffix = sys.stdin.read(), ".json"
        else:
            path = Path(source)
            text, suffix = path.read_text(encoding="utf-8"), path.suffix.lower()
    except OSError as exc:
        raise ConfigError(f"Cannot read config {source}: {exc}") from exc

    try:
        document = yaml.safe_load(text) if suffix in (".yaml", ".yml") else json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"Cannot parse config {source}: {exc}".replace("\n", " ")) from exc
    if not isinstance(document, dict):
        raise ConfigError("Config must be a single object")

    return RunConfig.model_validate(document)


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    run_updates: dict[str, Any] = {}
    if args.n is not None:
        if min(args.n) < 1:
            raise ConfigError(f"--n must be positive, got {args.n}")
        run_updates["n"] = tuple(args.n)
    if args.seed is not None:
        run_updates["seed"] = args.seed
    if args.out is not None:
        run_updates["out"] = args.out
    if args.format is not None:
        run_updates["format"] = args.format

    scheme = config.scheme
    if args.budget is not None:
        if args.budget < 1:
            raise ConfigError(f"--budget must be positive, got {args.budget}")
        scheme = scheme.model_copy(update={"budget": args.budget})

    return config.model_copy(update={"run": config.run.model_copy(update=run_updates), "scheme": scheme})


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _dump(report: BaseModel) -> str:
    return report.model_dump_json(indent=2) + "\n"


def _sample(config: RunConfig) -> SampleSpec:
    """The audit sample, seeded with the run seed."""
    return config.run.sample.model_copy(update={"seed": config.run.seed})


# Commands
def cmd_solve(config: RunConfig) -> int:
    """`u^h(0, 0)` as JSON."""
    problem = config.problem.build(config.steps)
    params = config.params

    audit = check_monotonicity(problem.generator, params, problem.grid.step, _sample(config))
    if not audit.passed:
        LOGGER.warning(
            "Scheme parameters fail the monotonicity audit (binding: %s); convergence is not guaranteed.",
            audit.binding,
        )

    result = Solver(problem, params, config.scheme.memo, budget=config.scheme.budget).solve()
    _write(_dump(result), config.run.out)
    return EXIT_OK


def cmd_check(config: RunConfig, suggest: bool = False) -> int:
    """Monotonicity audit as JSON; with `suggest`, audit the suggested parameters."""
    problem = config.problem.build(config.steps)
    step = problem.grid.step
    sample = _sample(config)

    params = config.params
    if suggest:
        params = suggest_params(
            problem.generator,
            sample,
            epsilon0=config.scheme.epsilon0,
            step=step,
            quad_order=params.quad_order,
        )

    report = check_monotonicity(problem.generator, params, step, sample)
    _write(_dump(report), config.run.out)
    if not report.passed:
        message = f"error: monotonicity check failed (binding: {report.binding})"
        print(message, file=sys.stderr)  # noqa: T201
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_converge(config: RunConfig) -> int:
    """Convergence table against the closed form."""
    problem = config.problem.build(config.run.n[0])
    table = convergence_study(
        problem, config.params, config.run.n, config.scheme.memo, budget=config.scheme.budget
    )
    emit(table, config.run.out, config.run.format or "csv")
    return EXIT_OK


def cmd_consistency(config: RunConfig) -> int:
    """Consistency residuals of the configured test functional."""
    if config.run.functional is None:
        raise ConfigError("run.functional is required for the consistency command")
    generator = get_generator(config.problem.generator, dim=config.problem.dim)
    table = consistency_sweep(
        config.run.functional,
        generator,
        config.params,
        config.run.anchor,
        config.run.h or DEFAULT_CONSISTENCY_STEPS,
    )
    emit(table, config.run.out, config.run.format or "csv")
    return EXIT_OK


def configure_logging(debug: bool = False) -> None:
    """Log to standard error at the configured level."""
    config = get_config()
    level = logging.DEBUG if debug or config.debug else getattr(logging, config.log_level)
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


class ArgumentParser(argparse.ArgumentParser):
    """Report usage errors as a single `error:` line with exit code 2."""

    def error(self, message: str) -> NoReturn:
        self.exit(EXIT_CONFIG, f"error: {' '.join(message.split())}\n")


def _add_common_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config", required=True, metavar="PATH", help="Run configuration; '-' reads stdin."
    )
    parser.add_argument("--n", type=int, nargs="+", default=None, help="Grid size(s), overrides run.n.")
    parser.add_argument("--seed", type=int, default=None, help="Overrides run.seed.")
    parser.add_argument("--out", default=None, metavar="PATH", help="Overrides run.out.")
    parser.add_argument("--format", choices=("csv", "json"), default=None, help="Overrides run.format.")
    parser.add_argument("--budget", type=int, default=None, metavar="N", help="Overrides scheme.budget.")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging.")


def build_parser() -> argparse.ArgumentParser:
    """The argument parser with its four subcommands."""
    parser = ArgumentParser(prog="ppde", description="Monotone schemes for path-dependent PDEs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    _add_common_args(subparsers.add_parser("solve", help="Compute u^h(0, 0)."))
    check = subparsers.add_parser("check", help="Audit the monotonicity conditions.")
    _add_common_args(check)
    check.add_argument("--suggest", action="store_true", help="Search passing scheme parameters.")
    _add_common_args(subparsers.add_parser("converge", help="Run a convergence study."))
    _add_common_args(subparsers.add_parser("consistency", help="Run a consistency sweep."))
    return parser


def _fail(message: str, code: int) -> int:
    print(f"error: {' '.join(str(message).split())}", file=sys.stderr)  # noqa: T201
    return code


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the `ppde` console script."""
    args = build_parser().parse_args(argv)
    configure_logging(args.debug)

    try:
        config = _apply_overrides(load_config(args.config), args)
        LOGGER.debug("Run configuration: %s", config)

        if args.command == "solve":
            return cmd_solve(config)
        if args.command == "check":
            return cmd_check(config, suggest=args.suggest)
        if args.command == "converge":
            return cmd_converge(config)
        return cmd_consistency(config)
    except ValidationError as exc:
        LOGGER.debug("Invalid configuration", exc_info=True)
        return _fail(describe_validation_error(exc), EXIT_CONFIG)
    except BudgetExceededError as exc:
        LOGGER.debug("Budget exceeded", exc_info=True)
        return _fail(str(exc), EXIT_BUDGET)
    except ParameterSearchError as exc:
        LOGGER.debug("Parameter search failed", exc_info=True)
        return _fail(str(exc), EXIT_CHECK_FAILED)
    except (PPDEError, ValueError) as exc:
        LOGGER.debug("Invalid input", exc_info=True)
        return _fail(str(exc), EXIT_CONFIG)
    except Exception as exc:  # noqa: BLE001
        LOGGER.debug("Internal error", exc_info=True)
        return _fail(f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

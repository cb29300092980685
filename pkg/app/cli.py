"""
Command line for the Melnikov toolkit.

    python -m app.cli reduce --side 1 --i 0 --j 5 --eta 1
    python -m app.cli zeros --config spec.json --csv samples.csv
    python -m app.cli verify pf --eta 1

Results are printed as JSON with sorted keys and without timing fields, so
reruns are byte-identical. Exit codes: 0 success, 1 verification failure or
runtime error, 2 invalid input.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
import typer

from app.config import get_settings, setup_logging
from app.errors import SpecValidationError
from app.services.melnikov_service import get_singleton_melnikov_service, strip_volatile
from app.services.verification_service import get_singleton_verification_service
from app.utils.perturbation import PerturbationSpec, load_spec

logger = logging.getLogger("app.cli")

EXIT_FAILURE = 1
EXIT_USAGE = 2
USAGE_ERRORS = ("DomainError", "SpecValidationError")

cli = typer.Typer(
    help="Reduction, evaluation and zero counting of Melnikov functions for piecewise perturbed quadratic centers",
    no_args_is_help=True,
    add_completion=False,
)

ConfigOption = typer.Option(..., "--config", "-c", help="Perturbation spec JSON file")
OutputOption = typer.Option(None, "--output", "-o", help="Write the JSON result here instead of stdout")


@cli.callback()
def main() -> None:
    setup_logging(get_settings())


def _emit(payload: Dict[str, Any], output: Optional[Path]) -> None:
    text = json.dumps(strip_volatile(payload), sort_keys=True, indent=2, default=str)
    if output:
        output.write_text(text + "\n", encoding="utf-8")
        logger.info(f"Result written to {output}")
    else:
        typer.echo(text)


def _finish(result: Dict[str, Any], output: Optional[Path]) -> None:
    _emit(result, output)
    if not result.get("success"):
        typer.echo(f"error: {result.get('message')}", err=True)
        code = EXIT_USAGE if result.get("error") in USAGE_ERRORS else EXIT_FAILURE
        raise typer.Exit(code=code)


def _load(config: Path) -> PerturbationSpec:
    try:
        return load_spec(config)
    except SpecValidationError as e:
        typer.echo(f"invalid config: {e}", err=True)
        raise typer.Exit(code=EXIT_USAGE)


def _parse_grid(grid: Optional[str]) -> Optional[List[float]]:
    if not grid:
        return None
    try:
        return [float(part) for part in grid.split(",") if part.strip()]
    except ValueError:
        raise typer.BadParameter(f"expected comma separated numbers, got {grid!r}", param_hint="--grid")


@cli.command()
def reduce(
    side: str = typer.Option("1", "--side", help="Side 1..4 or a contour name (gamma, upsilon, ...)"),
    i: int = typer.Option(..., "--i", min=0),
    j: int = typer.Option(..., "--j", min=-1),
    eta: str = typer.Option("1", "--eta", help="Rational eta as p/q"),
    output: Optional[Path] = OutputOption,
) -> None:
    """Reduced form of the integral of x^i y^(j-3) dy"""
    _finish(get_singleton_melnikov_service().reduce(side, i, j, eta), output)


@cli.command()
def assemble(
    config: Path = ConfigOption,
    case: Optional[str] = typer.Option(None, "--case", help="Assemble along another case path"),
    output: Optional[Path] = OutputOption,
) -> None:
    """
    M(h) in its generator basis, with the degree-structure check.

    structure.passed is judged against the envelope degree table;
    structure.published_passed against the published one.
    """
    _finish(get_singleton_melnikov_service().assemble(_load(config), case), output)


@cli.command(name="eval")
def evaluate(
    config: Path = ConfigOption,
    h: str = typer.Option(..., "--h", help="Energy level inside the annulus"),
    output: Optional[Path] = OutputOption,
) -> None:
    """M(h) at one energy level"""
    _finish(get_singleton_melnikov_service().evaluate(_load(config), h), output)


@cli.command()
def zeros(
    config: Path = ConfigOption,
    samples: Optional[int] = typer.Option(None, "--samples", min=2),
    csv: Optional[Path] = typer.Option(None, "--csv", help="Also write the (h, M) samples as CSV"),
    output: Optional[Path] = OutputOption,
) -> None:
    """Zeros of M(h) on the period annulus"""
    service = get_singleton_melnikov_service()
    spec = _load(config)
    result = service.zeros(spec, samples)
    if csv and result.get("success"):
        service.zero_samples(spec, samples).to_csv(csv, index=False)
        logger.info(f"Samples written to {csv}")
    _finish(result, output)


@cli.command()
def bound(
    n: int = typer.Option(..., "--n", min=1),
    case: str = typer.Option("general", "--case"),
    output: Optional[Path] = OutputOption,
) -> None:
    """Upper bound on the number of zeros of M(h)"""
    _finish(get_singleton_melnikov_service().bound(n, case), output)


@cli.command()
def verify(
    suite: str = typer.Argument(
        ...,
        help="reduction, pf, closedform, bases, green, assembly, structure or bounds "
        "(bounds scans MELNIKOV_ZERO_SAMPLES points per spec)",
    ),
    eta: str = typer.Option("1", "--eta"),
    seed: int = typer.Option(0, "--seed"),
    trials: Optional[int] = typer.Option(None, "--trials", min=1),
    csv: Optional[Path] = typer.Option(None, "--csv", help="Also write the rows as CSV"),
    output: Optional[Path] = OutputOption,
) -> None:
    """Compare one layer against the quadrature oracle"""
    result = get_singleton_verification_service().verify(suite, eta, seed, trials)
    if csv and "rows" in result:
        pd.DataFrame(result["rows"]).to_csv(csv, index=False)
    if result.get("row"):
        typer.echo(f"offending row: {json.dumps(result['row'], sort_keys=True)}", err=True)
    _finish(result, output)


@cli.command()
def simulate(
    config: Path = ConfigOption,
    eps: Optional[float] = typer.Option(None, "--eps", help="Perturbation scale"),
    grid: Optional[str] = typer.Option(None, "--grid", help="Comma separated section ordinates y0 > eta"),
    trajectory: Optional[Path] = typer.Option(
        None, "--trajectory", help="Also write one revolution through the first cycle (or first ordinate) as CSV"
    ),
    output: Optional[Path] = OutputOption,
) -> None:
    """Limit cycles of the perturbed system, matched to zeros of M(h)"""
    service = get_singleton_melnikov_service()
    spec = _load(config)
    ordinates = _parse_grid(grid)
    result = service.simulate(spec, eps, ordinates)
    if trajectory and result.get("success"):
        report = result["report"]
        y0 = report["cycles"][0]["y_star"] if report["cycles"] else report["grid"][0]
        service.trajectory(spec, y0, eps).to_csv(trajectory, index=False)
        logger.info(f"Trajectory from y0={y0:.6g} written to {trajectory}")
    _finish(result, output)


@cli.command()
def calibrate(
    eta: str = typer.Option("1", "--eta"),
    output: Optional[Path] = OutputOption,
) -> None:
    """Fit the closed-form constants for eta"""
    _finish(get_singleton_melnikov_service().calibrate(eta), output)


@cli.command()
def serve(
    host: Optional[str] = typer.Option(None, "--host"),
    port: Optional[int] = typer.Option(None, "--port"),
) -> None:
    """Run the HTTP API"""
    import uvicorn

    settings = get_settings()
    uvicorn.run("app.main:app", host=host or settings.api_host, port=port or settings.api_port, log_level="info")


if __name__ == "__main__":
    cli()

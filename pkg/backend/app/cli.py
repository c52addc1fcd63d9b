"""Command-line interface for toruslab."""

import logging
import math
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import typer
from pydantic import BaseModel
from rich import print as rprint
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from app import __version__
from app.config import RunConfig, get_settings, override_settings, parse_eps_grid
from app.errors import ToruslabError
from app.linalg.matrix import IntMatrix, parse_matrix
from app.reports.io import write_csv, write_json
from app.reports.schema import (
    AffineDocument,
    DegeneracyDocument,
    DissipationDocument,
    DynamoDocument,
    MinCurveDocument,
    NormCheckDocument,
    SimulationDocument,
    SpectralDocument,
)
from app.services.arithmin import (
    InsufficientData,
    Variant,
    growth_rate_fit,
    has_linear_growth,
    min_curve,
)
from app.services.dissipation import (
    NoiseModel,
    r_diss_fit,
    sweep_report,
)
from app.services.dynamo import dynamo_report
from app.services.fourier_sim import (
    DensityState,
    ModeBox,
    TruncatedOperator,
    default_cutoff,
    evolve_density,
    norm_estimate,
    resolvent_norm_estimate,
)
from app.services.spectral import (
    ToralMap,
    classify_affine,
    degeneracy_analysis,
    h_hat,
    parse_degeneracy,
    spectral_report,
)


DEFAULT_DYNAMO_EPS = 0.01
DEFAULT_SIMULATE_EPS = 0.01
NORM_CHECK_STEPS = 6

app = typer.Typer(help="Dissipation and dynamo time scales of noisy toral automorphisms")
console = Console(stderr=True)

MatrixOption = typer.Option(
    ..., "--matrix", "-m", help='Matrix F, rows split by ";" e.g. "2,1;1,1"'
)
ShiftOption = typer.Option(None, "--shift", "-c", help='Shift c, e.g. "1/2,1/3" or "sqrt(2),0"')
AlphaOption = typer.Option(1.0, "--alpha", "-a", help="Stability index in (0, 1]")
EpsOption = typer.Option(None, "--eps", "-e", help="Single noise level")
GridOption = typer.Option(None, "--eps-grid", help='Geometric grid "start:stop:points"')
EtaOption = typer.Option(math.exp(-1.0), "--eta", help="Dissipation threshold in (0, 1)")
CoarseOption = typer.Option(False, "--coarse", help="Use the coarse-grained variant")
DegeneracyOption = typer.Option(
    None, "--degenerate-B", help='Noise degeneracy B as a matrix or preset "stable"/"unstable"'
)
CutoffOption = typer.Option(None, "--cutoff", "-K", help="Fourier box cutoff K")
NMaxOption = typer.Option(40, "--n-max", "-n", help="Largest number of steps")
OutOption = typer.Option(None, "--out", "-o", help="Directory for <command>.json and CSV files")
BudgetOption = typer.Option(None, "--budget", help="Enumeration node budget per minimization")


@contextmanager
def _guarded() -> Iterator[None]:
    """Map toruslab errors to a red message and the category exit code."""
    try:
        yield
    except ToruslabError as e:
        console.print(f"[red]Error ({type(e).__name__}):[/red] {e}")
        raise typer.Exit(e.exit_code) from e


def _overrides(config: RunConfig) -> dict[str, Any]:
    return {"node_budget": config.budget} if config.budget is not None else {}


def _grid(eps_grid: str | None) -> list[float] | None:
    return parse_eps_grid(eps_grid) if eps_grid else None


def _emit(
    config: RunConfig,
    document: BaseModel,
    write_table: Callable[[Path], object] | None = None,
) -> None:
    """Print the JSON document and write it (with its table) under --out."""
    typer.echo(document.model_dump_json(indent=2))
    if config.out is None:
        return
    json_path = write_json(config.out / f"{config.command}.json", document)
    console.print(f"[green]Wrote[/green] {json_path}")
    if write_table is not None:
        csv_path = config.out / f"{config.command}.csv"
        write_table(csv_path)
        console.print(f"[green]Wrote[/green] {csv_path}")


def _fourier_side(matrix: str) -> tuple[IntMatrix, IntMatrix]:
    """Parse F and return (F, A = Fᵀ)."""
    f = ToralMap.parse(matrix).linear
    return f, f.transpose()


@app.command("analyze")
def analyze(matrix: str = MatrixOption, out: Path | None = OutOption) -> None:
    """Spectral report: entropy, ergodicity, factors and ĥ."""
    with _guarded():
        config = RunConfig.build(command="analyze", matrix=matrix, out=out)
        report = spectral_report(parse_matrix(config.matrix))
        _emit(config, SpectralDocument.from_report(report))

        table = Table(title=f"Spectrum of {report.matrix}")
        table.add_column("Factor")
        table.add_column("Multiplicity", justify="right")
        table.add_column("h_j", justify="right")
        table.add_column("ĥ_j", justify="right")
        for block in report.factors:
            table.add_row(
                str(block.poly.to_list()),
                str(block.multiplicity),
                f"{block.entropy:.7g}",
                f"{block.h_hat:.7g}",
            )
        console.print(table)


@app.command("dissipation")
def dissipation(
    matrix: str = MatrixOption,
    alpha: float = AlphaOption,
    eps: float | None = EpsOption,
    eps_grid: str | None = GridOption,
    eta: float = EtaOption,
    coarse: bool = CoarseOption,
    degenerate_b: str | None = DegeneracyOption,
    out: Path | None = OutOption,
    budget: int | None = BudgetOption,
) -> None:
    """Dissipation times over an ε grid with the fitted rate constant."""
    with _guarded():
        config = RunConfig.build(
            command="dissipation",
            matrix=matrix,
            alpha=alpha,
            epsilon=eps,
            eps_grid=_grid(eps_grid),
            eta=eta,
            coarse=coarse,
            degeneracy=degenerate_b,
            out=out,
            budget=budget,
        )
        f, a = _fourier_side(config.matrix)
        b = parse_degeneracy(config.degeneracy, a) if config.degeneracy else None
        if config.eps_grid is not None:
            grid = config.eps_grid
        elif config.epsilon is not None:
            grid = [config.epsilon]
        else:
            grid = parse_eps_grid(get_settings().default_eps_grid)

        with override_settings(**_overrides(config)):
            if len(grid) >= get_settings().fit_points:
                report = r_diss_fit(a, config.alpha, grid, config.eta, b, config.coarse)
            else:
                report = sweep_report(a, config.alpha, grid, config.eta, b, config.coarse)

        def table(path: Path) -> None:
            rows = (
                {"epsilon": e.epsilon, "n_diss": e.n_diss, "log_norm_at_n_diss": e.log_norm}
                for e in report.entries
            )
            write_csv(path, ["epsilon", "n_diss", "log_norm_at_n_diss"], rows)

        document = DissipationDocument.from_report(f.to_text(), config.eta, report)
        _emit(config, document, table)
        console.print(
            f"[cyan]{report.classification}[/cyan] dissipation, "
            f"R_diss fit {report.r_diss_fit:.6g}, predicted {report.r_diss_predicted:.6g}",
        )


@app.command("dynamo")
def dynamo(
    matrix: str = MatrixOption,
    alpha: float = AlphaOption,
    eps: float | None = EpsOption,
    eps_grid: str | None = GridOption,
    n_max: int = NMaxOption,
    out: Path | None = OutOption,
    budget: int | None = BudgetOption,
) -> None:
    """Push-forward norms of an advected field: R_dyn, peak and threshold times."""
    with _guarded():
        config = RunConfig.build(
            command="dynamo",
            matrix=matrix,
            alpha=alpha,
            epsilon=eps,
            eps_grid=_grid(eps_grid),
            n_max=n_max,
            out=out,
            budget=budget,
        )
        f = ToralMap.parse(config.matrix).linear
        epsilon = config.epsilon if config.epsilon is not None else DEFAULT_DYNAMO_EPS
        noise = NoiseModel(epsilon=epsilon, alpha=config.alpha)
        with override_settings(**_overrides(config)):
            report = dynamo_report(f, noise, config.n_max, config.eps_grid)

        def table(path: Path) -> None:
            rows = ({"n": n, "log_push_norm": v} for n, v in report.entries)
            write_csv(path, ["n", "log_push_norm"], rows)

        _emit(config, DynamoDocument.from_report(f.to_text(), report), table)
        console.print(
            f"[cyan]{report.classification}[/cyan]: n_p={report.n_p}, n_th={report.n_th}"
        )


@app.command("simulate")
def simulate(
    matrix: str = MatrixOption,
    shift: str | None = ShiftOption,
    alpha: float = AlphaOption,
    eps: float | None = EpsOption,
    degenerate_b: str | None = DegeneracyOption,
    cutoff: int | None = CutoffOption,
    n_max: int = NMaxOption,
    init: str = typer.Option(
        "cos1", "--init", help='Initial density: uniform, cos1 or "cos:k1,k2"'
    ),
    resolvent: bool = typer.Option(False, "--resolvent", help="Also estimate ‖(I - T)⁻¹‖"),
    out: Path | None = OutOption,
) -> None:
    """Evolve a density with the truncated noisy transfer operator."""
    with _guarded():
        config = RunConfig.build(
            command="simulate",
            matrix=matrix,
            shift=shift,
            alpha=alpha,
            epsilon=eps,
            degeneracy=degenerate_b,
            cutoff=cutoff,
            n_max=n_max,
            out=out,
        )
        toral_map = ToralMap.parse(config.matrix, config.shift)
        a = toral_map.fourier_matrix
        b = parse_degeneracy(config.degeneracy, a) if config.degeneracy else None
        epsilon = config.epsilon if config.epsilon is not None else DEFAULT_SIMULATE_EPS
        noise = NoiseModel(epsilon=epsilon, alpha=config.alpha, degeneracy=b)
        box = ModeBox(toral_map.dim, config.cutoff or default_cutoff(toral_map.dim))
        op = TruncatedOperator(toral_map, noise, box)

        with console.status("[cyan]Evolving density...[/cyan]"):
            trajectory = evolve_density(op, DensityState.preset(box, init), config.n_max)

        checks = []
        for n in range(1, min(config.n_max, NORM_CHECK_STEPS) + 1):
            estimate = norm_estimate(op, n)
            checks.append(
                NormCheckDocument(
                    n=n,
                    truncated=estimate.value,
                    analytic=estimate.analytic,
                    valid=estimate.valid,
                    deviation=abs(estimate.value - estimate.analytic),
                )
            )
        valid = [c.deviation for c in checks if c.valid]
        first, last = trajectory.rows[0], trajectory.rows[-1]
        document = SimulationDocument(
            matrix=toral_map.linear.to_text(),
            shift=toral_map.shift_text(),
            epsilon=epsilon,
            alpha=config.alpha,
            cutoff=box.cutoff,
            steps=config.n_max,
            initial=init,
            norm_checks=checks,
            max_valid_deviation=max(valid) if valid else None,
            entropy_start=first.bg_entropy,
            entropy_end=last.bg_entropy,
            l2_start=first.l2_fluct,
            l2_end=last.l2_fluct,
            dropped_mass=last.dropped_mass,
            resolvent_norm=resolvent_norm_estimate(op) if resolvent else None,
        )
        _emit(config, document, trajectory.to_csv)
        console.print(
            f"Entropy {first.bg_entropy:.6g} -> {last.bg_entropy:.6g}, "
            f"dropped mass {last.dropped_mass:.3e}"
        )


@app.command("mincurve")
def mincurve(
    matrix: str = MatrixOption,
    alpha: float = AlphaOption,
    coarse: bool = CoarseOption,
    degenerate_b: str | None = DegeneracyOption,
    n_max: int = NMaxOption,
    out: Path | None = OutOption,
    budget: int | None = BudgetOption,
) -> None:
    """Raw table of certified minima M(n) for n = 1..n_max."""
    with _guarded():
        config = RunConfig.build(
            command="mincurve",
            matrix=matrix,
            alpha=alpha,
            coarse=coarse,
            degeneracy=degenerate_b,
            n_max=n_max,
            out=out,
            budget=budget,
        )
        _, a = _fourier_side(config.matrix)
        b = parse_degeneracy(config.degeneracy, a) if config.degeneracy else None
        if config.coarse:
            variant = Variant.COARSE
        else:
            variant = Variant.DEGENERATE if b is not None else Variant.FULL_SUM

        with override_settings(**_overrides(config)):
            curve = min_curve(a, config.n_max, config.alpha, variant, b)

        try:
            fit: float | None = growth_rate_fit(curve)
        except InsufficientData:
            fit = None
        try:
            linear: bool | None = has_linear_growth(curve)
        except InsufficientData:
            linear = None

        document = MinCurveDocument.from_curve(a.to_text(), curve, h_hat(a), fit, linear)
        _emit(config, document, curve.to_csv)

        table = Table(title=f"M(n) for A = {a}")
        table.add_column("n", justify="right")
        table.add_column("M(n)", justify="right")
        table.add_column("argmin")
        for n in curve.ns()[-10:]:
            entry = curve.entries[n]
            table.add_row(str(n), str(entry.value), str(entry.argmin))
        console.print(table)


@app.command("classify-affine")
def classify_affine_command(
    matrix: str = MatrixOption,
    shift: str | None = ShiftOption,
    out: Path | None = OutOption,
) -> None:
    """Ergodicity of the affine map x -> F x + c."""
    with _guarded():
        config = RunConfig.build(command="classify-affine", matrix=matrix, shift=shift, out=out)
        toral_map = ToralMap.parse(config.matrix, config.shift)
        result = classify_affine(toral_map)
        document = AffineDocument.from_classification(
            toral_map.linear.to_text(), toral_map.shift_text(), result
        )
        _emit(config, document)
        console.print(f"Verdict: [cyan]{result.verdict}[/cyan]")


@app.command("degeneracy-check")
def degeneracy_check(
    matrix: str = MatrixOption,
    degenerate_b: str = typer.Option(
        ..., "--degenerate-B", help='Noise degeneracy B as a matrix or preset "stable"/"unstable"'
    ),
    out: Path | None = OutOption,
) -> None:
    """Whether noise degenerate along B still dissipates."""
    with _guarded():
        config = RunConfig.build(
            command="degeneracy-check", matrix=matrix, degeneracy=degenerate_b, out=out
        )
        _, a = _fourier_side(config.matrix)
        b = parse_degeneracy(config.degeneracy or degenerate_b, a)
        analysis = degeneracy_analysis(a, b)
        document = DegeneracyDocument.from_analysis(
            a.transpose().to_text(), b.to_numpy().tolist(), analysis
        )
        _emit(config, document)
        console.print(f"Case: [cyan]{analysis.case}[/cyan] (span rank {analysis.rank})")


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log progress to stderr"),
) -> None:
    """toruslab - dissipation times of noisy toral automorphisms.

    Every command prints a JSON report; --out DIR also writes <command>.json
    and, where there is a table, <command>.csv.
    """
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


@app.command("version")
def version() -> None:
    """Show version information."""
    rprint(f"toruslab version {__version__}")


if __name__ == "__main__":
    app()

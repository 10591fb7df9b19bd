"""CLI entry point for the radiation-damping laboratory."""
import logging
import sys
from pathlib import Path

import click
from rich.console import Console
from rich.table import Table
from rich.logging import RichHandler

from .config import DB_PATH, EXPERIMENT_KINDS
from .database import (
    get_check_stats,
    get_checks_for_run,
    get_connection,
    get_run,
    get_runs,
    init_database,
)
from .errors import ConfigError, RunError
from .experiment import parse_config, run
from .export import export_checks_csv, export_trajectory_parquet

console = Console()

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format="%(message)s",
    handlers=[RichHandler(console=console, rich_tracebacks=True)]
)
logger = logging.getLogger(__name__)


@click.group()
@click.option("--debug", is_flag=True, help="Enable debug logging")
def cli(debug):
    """Radial NLS-oscillator radiation damping laboratory."""
    if debug:
        logging.getLogger().setLevel(logging.DEBUG)


def experiment_options(func):
    """Options shared by every experiment command."""
    func = click.option("--no-record", is_flag=True, help="Do not register the run in the database")(func)
    func = click.option("--override", "-O", "overrides", multiple=True, help="Override a setting: section.key=value")(func)
    func = click.option("--out", "-o", type=click.Path(path_type=Path), help="Run directory")(func)
    func = click.option("--config", "-c", "config_path", required=True, type=click.Path(path_type=Path),
                        help="Experiment file (TOML)")(func)
    return func


def _run_experiment(kind: str, config_path: Path, out: Path, overrides, no_record: bool):
    try:
        config = parse_config(config_path, kind, overrides)
    except ConfigError as e:
        console.print(f"[red]Invalid configuration: {e}[/red]")
        sys.exit(2)

    conn = None
    if not no_record:
        conn = get_connection(DB_PATH)
        init_database(conn)

    console.print(f"[bold]Running {kind} experiment...[/bold]")
    try:
        out_dir, checks = run(config, out, conn)
    except ConfigError as e:
        console.print(f"[red]Invalid configuration: {e}[/red]")
        sys.exit(2)
    except RunError as e:
        logger.debug("run failed", exc_info=e.cause)
        console.print(f"[red]Error: {e}[/red]")
        sys.exit(1)
    finally:
        if conn is not None:
            conn.close()

    table = Table(title=f"{kind} checks")
    table.add_column("Check", style="cyan")
    table.add_column("Statistic", justify="right")
    table.add_column("Tolerance", justify="right")
    table.add_column("Passed", justify="center")
    for check in checks:
        mark = "[green]yes[/green]" if check.passed else "[red]no[/red]"
        table.add_row(check.name, f"{check.statistic:.6g}", f"{check.tolerance:.3g}", mark)
    console.print(table)
    console.print(f"\n[green]Run directory:[/green] {out_dir}")

    if not all(check.passed for check in checks):
        console.print("[yellow]Some checks failed.[/yellow]")
        sys.exit(1)


@cli.command()
@experiment_options
def simulate(config_path, out, overrides, no_record):
    """Evolve the coupled system and report mass and energy drift."""
    _run_experiment("simulate", config_path, out, overrides, no_record)


@cli.command()
@experiment_options
def fgr(config_path, out, overrides, no_record):
    """Compute beta and Gamma of the coupling two ways."""
    _run_experiment("fgr", config_path, out, overrides, no_record)


@cli.command("standing-wave")
@experiment_options
def standing_wave(config_path, out, overrides, no_record):
    """Build the standing wave of a shell-vanishing coupling and evolve it."""
    _run_experiment("standing-wave", config_path, out, overrides, no_record)


@cli.command("scatter-report")
@experiment_options
def scatter_report(config_path, out, overrides, no_record):
    """Cauchy defect of the pullbacks and the oscillator tail."""
    _run_experiment("scatter-report", config_path, out, overrides, no_record)


@cli.command()
@experiment_options
def virial(config_path, out, overrides, no_record):
    """Check the localized virial identity along a run."""
    _run_experiment("virial", config_path, out, overrides, no_record)


@cli.command()
@experiment_options
def damping(config_path, out, overrides, no_record):
    """Check the radiation damping identities and the reduced amplitude law."""
    _run_experiment("damping", config_path, out, overrides, no_record)


@cli.command("decay-probe")
@experiment_options
def decay_probe(config_path, out, overrides, no_record):
    """Fit the weighted decay exponent of the free flow of R_+(1)G."""
    _run_experiment("decay-probe", config_path, out, overrides, no_record)


@cli.command()
def init():
    """Initialize the run registry."""
    console.print("[bold]Initializing database...[/bold]")
    conn = get_connection(DB_PATH)
    init_database(conn)
    conn.close()
    console.print(f"[green]Database initialized at {DB_PATH}[/green]")


@cli.command("show-runs")
@click.option("--kind", "-k", default=None, help="Only runs of this experiment kind")
@click.option("--limit", "-n", default=20, help="Number of runs to show")
def show_runs(kind, limit):
    """Show registered runs."""
    conn = get_connection(DB_PATH)
    init_database(conn)
    runs = get_runs(conn, kind, limit)
    stats = get_check_stats(conn)
    conn.close()

    if not runs:
        console.print("[yellow]No runs found. Run an experiment first.[/yellow]")
        return

    table = Table(title="Runs")
    table.add_column("ID", justify="right")
    table.add_column("Kind", style="cyan")
    table.add_column("Status", justify="center")
    table.add_column("Started")
    table.add_column("Directory")

    for row in runs:
        color = {"pass": "green", "fail": "red", "error": "red"}.get(row["status"], "yellow")
        table.add_row(
            str(row["id"]),
            row["kind"],
            f"[{color}]{row['status']}[/{color}]",
            row["started_at"][:19],
            row["out_dir"],
        )

    console.print(table)

    if stats:
        summary = Table(title="Pass rate by check")
        summary.add_column("Kind", style="cyan")
        summary.add_column("Check")
        summary.add_column("Passed", justify="right", style="green")
        summary.add_column("Worst statistic", justify="right")
        for row in stats:
            worst = row["worst_statistic"]
            summary.add_row(
                row["kind"],
                row["check_name"],
                f"{row['passed']}/{row['runs']}",
                f"{worst:.3g}" if worst is not None else "-",
            )
        console.print(summary)


@cli.command("show-checks")
@click.argument("run_id", type=int)
def show_checks(run_id):
    """Show the checks of one run."""
    conn = get_connection(DB_PATH)
    init_database(conn)
    run_row = get_run(conn, run_id)
    checks = get_checks_for_run(conn, run_id)
    conn.close()

    if run_row is None:
        console.print(f"[red]Error: no run with id {run_id}[/red]")
        sys.exit(1)
    if not checks:
        console.print(f"[yellow]Run {run_id} has no checks ({run_row['status']}).[/yellow]")
        return

    table = Table(title=f"Run {run_id}: {run_row['kind']}")
    table.add_column("Check", style="cyan")
    table.add_column("Statistic", justify="right")
    table.add_column("Tolerance", justify="right")
    table.add_column("Passed", justify="center")
    for check in checks:
        mark = "[green]yes[/green]" if check.passed else "[red]no[/red]"
        table.add_row(check.name, f"{check.statistic:.6g}", f"{check.tolerance:.3g}", mark)

    console.print(table)


@cli.command("list-kinds")
def list_kinds():
    """List experiment kinds and their checks."""
    table = Table(title="Experiment kinds")
    table.add_column("Kind", style="cyan")
    table.add_column("Description")
    table.add_column("Checks")

    for kind, entry in EXPERIMENT_KINDS.items():
        table.add_row(kind, entry["description"], ", ".join(entry["checks"]))

    console.print(table)


@cli.command("export")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--output", "-o", type=click.Path(path_type=Path), help="Parquet file for the checkpoint scalars")
@click.option("--checks-csv", type=click.Path(path_type=Path), help="Also export all registered checks to this CSV")
def export(run_dir, output, checks_csv):
    """Export a run's checkpoint scalars to Parquet."""
    console.print("[bold]Exporting checkpoint scalars to Parquet...[/bold]")
    try:
        path = export_trajectory_parquet(run_dir, output)
    except (FileNotFoundError, ValueError) as e:
        console.print(f"[red]Error: {e}[/red]")
        sys.exit(1)
    console.print(f"\n[green]Saved to:[/green] {path}")

    if checks_csv:
        console.print("[bold]Exporting registered checks to CSV...[/bold]")
        path = export_checks_csv(checks_csv, DB_PATH)
        console.print(f"\n[green]Saved to:[/green] {path}")


def main():
    """Main entry point."""
    cli()


if __name__ == "__main__":
    main()

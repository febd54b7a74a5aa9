from typing import Optional

from rich.console import Console
from rich.panel import Panel
from rich.table import Table


console = Console()


def format_value(value: Optional[float]) -> str:
    if value is None:
        return "-"
    if value == 0 or 1e-3 <= abs(value) < 1e5:
        return f"{value:.6g}"
    return f"{value:.4e}"


def format_bytes(size_bytes: float) -> str:
    for unit in ["B", "KB", "MB", "GB"]:
        if abs(size_bytes) < 1024:
            return f"{size_bytes:.1f} {unit}"
        size_bytes /= 1024
    return f"{size_bytes:.1f} TB"


def print_error(message: str) -> None:
    console.print(f"[red bold]✗[/red bold] {message}")


def print_success(message: str) -> None:
    console.print(f"[green bold]✓[/green bold] {message}")


def print_warning(message: str) -> None:
    console.print(f"[yellow bold]⚠[/yellow bold] {message}")


def print_info(message: str) -> None:
    console.print(f"[blue]ℹ[/blue] {message}")


def create_metrics_table(metrics: dict[str, float], units: dict[str, str]) -> Table:
    table = Table(title="Metrics", show_header=True, header_style="bold cyan")
    table.add_column("Metric", style="dim")
    table.add_column("Value", justify="right")
    table.add_column("Unit")

    for name, value in metrics.items():
        table.add_row(name, format_value(value), units.get(name, ""))

    return table


def create_selfcheck_table(results: list) -> Table:
    table = Table(title="Self-check", show_header=True, header_style="bold cyan")
    table.add_column("Check")
    table.add_column("Expected", style="dim")
    table.add_column("Observed")
    table.add_column("Result", justify="center")

    for result in results:
        status = "[green bold]PASS[/green bold]" if result.passed else "[red bold]FAIL[/red bold]"
        table.add_row(result.name, result.expected, result.observed, status)

    return table


def create_sweep_table(
    parameter: str,
    unit: str,
    records: list,
    outputs: list[str],
    max_columns: int = 6,
) -> Table:
    table = Table(title=f"Sweep over {parameter}", show_header=True, header_style="bold cyan")
    table.add_column(f"{parameter} [{unit}]", style="cyan", justify="right")
    shown = outputs[:max_columns]
    for name in shown:
        table.add_column(name, justify="right")
    table.add_column("Status", justify="center")

    for record in records:
        cells = [format_value(record.metrics.get(name)) for name in shown]
        status = "[green]ok[/green]" if record.error is None else "[red]error[/red]"
        table.add_row(format_value(record.parameter_value), *cells, status)

    return table


def print_validation_result(issues: list[dict]) -> bool:
    errors = [i for i in issues if not i["passed"] and i["severity"] == "error"]
    warnings = [i for i in issues if not i["passed"] and i["severity"] == "warning"]

    if not errors:
        lines = ["[green bold]✓ Config valid[/green bold]"]
        for issue in warnings:
            lines.append(f"[yellow]• {issue['field']}: {issue['message']}[/yellow]")
        panel = Panel("\n".join(lines), border_style="green")
    else:
        lines = ["[red bold]✗ Config invalid[/red bold]\n"]
        for issue in errors + warnings:
            lines.append(f"• {issue['field']}: {issue['message']}")
        panel = Panel("\n".join(lines), border_style="red")

    console.print(panel)
    return not errors

import warnings
from pathlib import Path
from typing import Optional

import click

from twinbeam.errors import ConfigError, TwinBeamError
from twinbeam.sweeps import analyze_point
from twinbeam.utils.config import apply_overrides, load_config
from twinbeam.utils.display import (
    console,
    create_metrics_table,
    print_error,
    print_info,
    print_success,
    print_warning,
)
from twinbeam.utils.export import write_error, write_point


def cli_overrides(workers: Optional[int], grid_scale: Optional[float]) -> dict:
    overrides = {}
    if workers is not None:
        overrides["numerics.workers"] = workers
    if grid_scale is not None:
        overrides["numerics.grid_scale"] = grid_scale
    return overrides


@click.command()
@click.option(
    "--config", "config_path",
    type=click.Path(exists=True, dir_okay=False),
    help="Run config (YAML or JSON); the bundled default if omitted",
)
@click.option(
    "--out", "out_dir",
    type=click.Path(file_okay=False),
    help="Output directory (default: output.directory from the config)",
)
@click.option("--workers", type=click.IntRange(min=1), help="Threads for per-order decompositions")
@click.option(
    "--grid-scale",
    type=click.FloatRange(min=0, min_open=True),
    help="Multiply every grid size (convergence studies)",
)
@click.option("--export-kernels", is_flag=True, help="Also write T_0 and F_L in long format")
def analyze(
    config_path: Optional[str],
    out_dir: Optional[str],
    workers: Optional[int],
    grid_scale: Optional[float],
    export_kernels: bool,
):
    """Analyze one parameter point: mode counts, profiles, modes and correlations."""
    directory = Path(out_dir) if out_dir else None
    try:
        config = load_config(config_path)
        overrides = cli_overrides(workers, grid_scale)
        if overrides:
            config = apply_overrides(config, overrides)
        directory = directory or Path(config.output.directory)

        print_info(f"Config hash: {config.fingerprint()}")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            with console.status("Computing kernels and decompositions..."):
                result = analyze_point(config)
        for warning in caught:
            print_warning(str(warning.message))

        written = write_point(result, directory, export_kernels=export_kernels)

        console.print()
        console.print(create_metrics_table(result.metrics, result.units))
        print_success(f"Wrote {len(written)} files to {directory}")

    except SystemExit:
        raise
    except FileNotFoundError as e:
        print_error(str(e))
        raise SystemExit(1)
    except ConfigError as e:
        print_error(str(e))
        if directory is not None:
            write_error(directory, e)
        raise SystemExit(1)
    except (TwinBeamError, ValueError, ArithmeticError) as e:
        print_error(f"Analysis failed: {e}")
        if directory is not None:
            write_error(directory, e)
        raise SystemExit(1)

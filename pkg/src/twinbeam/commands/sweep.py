from pathlib import Path
from typing import Optional

import click
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn

from twinbeam.commands.analyze import cli_overrides
from twinbeam.errors import TwinBeamError
from twinbeam.store import SweepStore
from twinbeam.sweeps import bundled_sweep_names, load_sweep_spec, run_sweep
from twinbeam.utils.config import apply_overrides, hash_config, load_config
from twinbeam.utils.display import (
    console,
    create_sweep_table,
    format_bytes,
    print_error,
    print_info,
    print_success,
    print_warning,
)
from twinbeam.utils.export import write_manifest, write_sweep


@click.command()
@click.option(
    "--spec", "spec_ref",
    required=True,
    help=f"Sweep spec file, or a bundled name ({', '.join(bundled_sweep_names())})",
)
@click.option(
    "--config", "config_path",
    type=click.Path(exists=True, dir_okay=False),
    help="Base run config; the bundled default if omitted",
)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), help="Output directory")
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True, help="Worker processes")
@click.option(
    "--grid-scale",
    type=click.FloatRange(min=0, min_open=True),
    help="Multiply every grid size (convergence studies)",
)
@click.option(
    "--cache", "cache_path",
    type=click.Path(dir_okay=False),
    help="duckdb store; points with a matching config hash are reused",
)
def sweep(
    spec_ref: str,
    config_path: Optional[str],
    out_dir: Optional[str],
    workers: int,
    grid_scale: Optional[float],
    cache_path: Optional[str],
):
    """Run a parameter sweep and write one CSV row per value."""
    store = None
    try:
        base = load_config(config_path)
        overrides = cli_overrides(None, grid_scale)
        if overrides:
            base = apply_overrides(base, overrides)
        spec = load_sweep_spec(spec_ref, base)
        directory = Path(out_dir) if out_dir else Path(spec.base.output.directory) / spec.name

        print_info(f"Sweep {spec.name}: {len(spec.values)} values of {spec.parameter.value}")
        if cache_path:
            store = SweepStore(Path(cache_path))
            print_info(
                f"Reusing stored points from {cache_path} "
                f"({store.get_record_count()} points, {format_bytes(store.get_store_size_bytes())})"
            )

        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            MofNCompleteColumn(),
            console=console,
        ) as progress:
            task = progress.add_task("Evaluating points...", total=len(spec.values))
            records = run_sweep(
                spec,
                workers=workers,
                store=store,
                on_record=lambda record: progress.advance(task),
            )

        csv_path = write_sweep(directory / "sweep.csv", spec, records)
        sweep_source = spec.to_dict()
        sweep_source.pop("base")
        write_manifest(
            directory / "manifest.json",
            spec.base.to_dict(),
            spec.base.fingerprint(),
            sweep=sweep_source,
            sweep_hash=hash_config(sweep_source),
            point_config_hashes=[r.config_hash for r in records],
        )

        console.print()
        console.print(create_sweep_table(spec.parameter.value, spec.parameter.unit, records, list(spec.outputs)))

        seen = set()
        for record in records:
            for message in record.warnings:
                if message not in seen:
                    seen.add(message)
                    print_warning(message)

        failed = [r for r in records if r.error is not None]
        for record in failed:
            print_error(f"{spec.parameter.value} = {record.parameter_value:.6g}: {record.error}")

        if failed:
            print_error(f"{len(failed)} of {len(records)} points failed; results in {csv_path}")
            raise SystemExit(1)
        print_success(f"Wrote {len(records)} points to {csv_path}")

    except SystemExit:
        raise
    except FileNotFoundError as e:
        print_error(str(e))
        raise SystemExit(1)
    except (TwinBeamError, ValueError) as e:
        print_error(f"Sweep failed: {e}")
        raise SystemExit(1)
    finally:
        if store is not None:
            store.close()

import time
from typing import Optional

import click

from twinbeam.selfcheck import run_selfcheck
from twinbeam.utils.display import console, create_selfcheck_table, print_error, print_success


@click.command()
@click.option("--x-e", "x_e", type=float, hidden=True)
def selfcheck(x_e: Optional[float]):
    """Run the analytic oracle suite."""
    start = time.perf_counter()
    results = run_selfcheck(x_e=x_e)
    elapsed = time.perf_counter() - start

    console.print(create_selfcheck_table(results))

    failed = [r for r in results if not r.passed]
    if failed:
        print_error(f"{len(failed)} of {len(results)} checks failed")
        raise SystemExit(1)
    print_success(f"All {len(results)} checks passed in {elapsed:.1f}s")

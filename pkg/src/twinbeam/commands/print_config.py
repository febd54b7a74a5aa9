from typing import Optional

import click

from twinbeam.errors import ConfigError
from twinbeam.utils.config import (
    DEFAULT_CONFIG_PATH,
    dump_config,
    read_config_file,
    resolve_config,
    validate_config,
)
from twinbeam.utils.display import print_error, print_validation_result


@click.command(name="print-config")
@click.option(
    "--config", "config_path",
    type=click.Path(exists=True, dir_okay=False),
    help="Run config (YAML or JSON); the bundled default if omitted",
)
@click.option("--check", is_flag=True, help="Only report validation issues")
def print_config(config_path: Optional[str], check: bool):
    """Print the fully resolved config as YAML."""
    try:
        raw = read_config_file(config_path or DEFAULT_CONFIG_PATH)

        if check:
            if not print_validation_result(validate_config(raw)):
                raise SystemExit(1)
            return

        config = resolve_config(raw)
        click.echo(f"# config hash: {config.fingerprint()}")
        click.echo(dump_config(config), nl=False)

    except SystemExit:
        raise
    except ConfigError as e:
        if e.issues:
            print_validation_result(e.issues)
        else:
            print_error(str(e))
        raise SystemExit(1)
    except FileNotFoundError as e:
        print_error(str(e))
        raise SystemExit(1)

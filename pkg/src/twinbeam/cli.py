import click

from twinbeam.commands.analyze import analyze
from twinbeam.commands.print_config import print_config
from twinbeam.commands.selfcheck import selfcheck
from twinbeam.commands.sweep import sweep


@click.group()
@click.version_option(package_name="twinbeam")
def cli():
    """Schmidt modes and coherence of weak type-I twin beams in BBO."""


cli.add_command(analyze)
cli.add_command(sweep)
cli.add_command(selfcheck)
cli.add_command(print_config)


if __name__ == "__main__":
    cli()

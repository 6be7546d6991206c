"""Command-line interface for fromage-lab using click.

Every run subcommand takes ``--config``, ``--out``, ``--seed`` and repeatable
``--set key=value`` overrides, and writes its CSV tables plus ``summary.json``
to ``OUT/COMMAND/LABEL/``.
"""

from __future__ import annotations

import logging
from pathlib import Path

import click

from .commands.config_group import config
from .commands.depth_sweep import depth_sweep
from .commands.descent_check import descent_check
from .commands.lr_grid import lr_grid
from .commands.norm_growth import norm_growth
from .commands.perturb_sweep import perturb_sweep
from .commands.train import train
from .commands.verify_bounds import verify_bounds
from .constants import CONFIG_ENV_VAR, LOG_FORMAT, LOG_LEVEL_ENV_VAR


@click.group()
@click.version_option(package_name="fromage-lab")
@click.option(
    "--config",
    "-c",
    "config_path",
    type=click.Path(exists=False, dir_okay=False, resolve_path=True),
    envvar=CONFIG_ENV_VAR,
    help="Path to a fromage-lab configuration YAML file.",
)
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default="WARNING",
    envvar=LOG_LEVEL_ENV_VAR,
    show_default=True,
    help="Logging level for library messages.",
)
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, log_level: str) -> None:
    """Top-level command group for fromage-lab.

    Provides subcommands for training perceptrons with Fromage and its
    competitors, checking perturbation bounds, and running the depth,
    perturbation, norm-growth and learning-rate studies.
    """
    logging.basicConfig(level=getattr(logging, log_level.upper()), format=LOG_FORMAT)
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = Path(config_path) if config_path is not None else None


cli.add_command(train)
cli.add_command(perturb_sweep)
cli.add_command(norm_growth)
cli.add_command(depth_sweep)
cli.add_command(verify_bounds)
cli.add_command(lr_grid)
cli.add_command(descent_check)
cli.add_command(config)


if __name__ == "__main__":
    cli()

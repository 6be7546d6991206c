from __future__ import annotations

from pathlib import Path

import click
from omegaconf import OmegaConf

from ...schema import RunConfig
from ..config import LabConfig, current_config


@click.group()
def config() -> None:
    """Inspect and create fromage-lab run configurations.

    This group reads the YAML configuration merged by :class:`LabConfig`
    (schema defaults, then the ``--config`` file, then ``--set`` overrides).
    """


@config.command()
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override a value before printing.")
def show(overrides: tuple[str, ...]) -> None:
    """Print the merged configuration as YAML."""
    config_manager = current_config()
    click.echo(OmegaConf.to_yaml(config_manager.load(overrides)), nl=False)


@config.command()
@click.argument("path", type=click.Path(dir_okay=False, resolve_path=True))
@click.option("--force", is_flag=True, help="Overwrite an existing file.")
def init(path: str, force: bool) -> None:
    """Write the default configuration to PATH as a starting point.

    Parameters
    ----------
    path:
        Destination YAML file. Parent directories are created.
    force:
        Replace the file if it already exists.
    """
    target = Path(path)
    if target.exists() and not force:
        raise click.ClickException(f"{target} already exists (use --force to overwrite)")
    LabConfig(config_path=target).save(RunConfig())
    click.echo(f"[SUCCESS] Wrote default configuration to {target}")


@config.command()
@click.argument("key")
def get(key: str) -> None:
    """Get one configuration value.

    Parameters
    ----------
    key:
        Dot-notation key, for example ``\"optimizer.eta\"``.
    """
    config_manager = current_config()
    value = config_manager.get(key)
    if value is None:
        click.echo(f"[ERROR] Key '{key}' not found")
    else:
        if OmegaConf.is_config(value):
            value = OmegaConf.to_container(value)
        click.echo(f"{key} = {value}")

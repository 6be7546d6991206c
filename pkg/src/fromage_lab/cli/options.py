"""Options and helpers shared by the run subcommands."""

from __future__ import annotations

from collections.abc import Callable, Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any, TypeVar

import attrs
import click

from ..exceptions import FromageLabError
from ..records import run_directory
from ..schema import RunConfig
from .config import current_config, resolved_yaml

F = TypeVar("F", bound=Callable[..., Any])


def run_options(func: F) -> F:
    """Attach ``--config``, ``--out``, ``--seed`` and ``--set`` to a command."""
    func = click.option(
        "--set",
        "overrides",
        multiple=True,
        metavar="KEY=VALUE",
        help="Override a configuration value (dot notation); repeatable.",
    )(func)
    func = click.option(
        "--seed", type=click.IntRange(min=0), default=None, help="Global seed (overrides the config)."
    )(func)
    func = click.option(
        "--out",
        "output_dir",
        type=click.Path(file_okay=False, dir_okay=True, resolve_path=True),
        default=None,
        help="Output root; results go to OUT/COMMAND/LABEL/.",
    )(func)
    func = click.option(
        "--config",
        "-c",
        "config_path",
        type=click.Path(exists=False, dir_okay=False, resolve_path=True),
        default=None,
        help="Run configuration YAML (overrides the group-level --config).",
    )(func)
    return func


@attrs.define(kw_only=True, frozen=True)
class Run:
    """A resolved configuration and the directory its outputs go to."""

    command: str
    config: RunConfig
    run_dir: Path
    config_yaml: str


def start_run(
    command: str,
    config_path: str | None,
    output_dir: str | None,
    seed: int | None,
    overrides: tuple[str, ...],
) -> Run:
    run_config = current_config(config_path).resolve(overrides, output_dir=output_dir, seed=seed)
    assert run_config.output_dir is not None
    run_dir = run_directory(run_config.output_dir, command, run_config.label)
    click.echo(f"[{command.upper()}] Writing results to {run_dir}")
    return Run(command=command, config=run_config, run_dir=run_dir, config_yaml=resolved_yaml(run_config))


@contextmanager
def lab_errors(action: str) -> Iterator[None]:
    """Convert library errors into ``click.ClickException``."""
    try:
        yield
    except (FromageLabError, ValueError) as e:
        raise click.ClickException(f"{action} failed: {e}") from e

"""Configuration management for the fromage-lab CLI."""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path
from typing import Any

import click
from omegaconf import DictConfig, OmegaConf

from ..exceptions import ConfigError
from ..schema import RunConfig, build_config, to_run_config, to_yaml
from .constants import CONFIG_FILE, DEFAULT_RUNS_DIR


class LabConfig:
    """OmegaConf-based configuration manager for fromage-lab runs.

    The file is optional: without one, the schema defaults are used. An
    explicitly requested file that does not exist is an error.
    """

    def __init__(self, config_path: str | Path | None = None) -> None:
        self.explicit = config_path is not None
        self.config_path = Path(config_path) if config_path is not None else CONFIG_FILE
        self.config: DictConfig | None = None

    def _source(self) -> Path | None:
        if self.explicit or self.config_path.exists():
            return self.config_path
        return None

    def load(self, overrides: Sequence[str] = ()) -> DictConfig:
        """Load defaults, the configuration file and ``key=value`` overrides."""
        try:
            self.config = build_config(self._source(), overrides)
        except ConfigError as e:
            raise click.ClickException(str(e)) from e
        return self.config

    def save(self, config: dict[str, Any] | DictConfig | RunConfig) -> None:
        """Save configuration to file."""
        self.config_path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(config, RunConfig):
            config = OmegaConf.create(config.to_dict())
        elif isinstance(config, dict):
            config = OmegaConf.create(config)
        OmegaConf.save(config, self.config_path)
        self.config = config

    def get(self, key: str) -> Any:
        """Get configuration value using dot notation."""
        if self.config is None:
            self.load()
        assert self.config is not None
        return OmegaConf.select(self.config, key)

    def resolve(
        self,
        overrides: Sequence[str] = (),
        *,
        output_dir: str | Path | None = None,
        seed: int | None = None,
    ) -> RunConfig:
        """Validated run configuration; ``--out`` and ``--seed`` win over everything."""
        cfg = self.load(overrides)
        try:
            run_config = to_run_config(cfg)
        except ConfigError as e:
            raise click.ClickException(str(e)) from e
        changes: dict[str, Any] = {}
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        elif run_config.output_dir is None:
            changes["output_dir"] = str(DEFAULT_RUNS_DIR)
        if seed is not None:
            changes["seed"] = seed
        if changes:
            run_config = RunConfig(**{**run_config.to_dict(), **changes})
        return run_config


def current_config(config_path: str | Path | None = None) -> LabConfig:
    """Return a :class:`LabConfig` for ``config_path`` or the CLI context path.

    A command-level ``--config`` wins over the group-level option (or
    ``FROMAGE_LAB_CONFIG``).
    """
    if config_path is None:
        try:
            ctx = click.get_current_context()
            config_path = ctx.obj.get("config_path") if ctx.obj else None
        except RuntimeError:
            config_path = None
    return LabConfig(config_path=config_path)


def resolved_yaml(run_config: RunConfig) -> str:
    return to_yaml(run_config)

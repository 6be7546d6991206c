"""Shared constants for the fromage-lab CLI."""

from __future__ import annotations

import os
from pathlib import Path

import platformdirs

# Cross-platform directories using platformdirs
CONFIG_DIR = Path(platformdirs.user_config_dir(appname="fromage-lab", appauthor="fromage-lab"))
DATA_DIR = Path(platformdirs.user_data_dir(appname="fromage-lab", appauthor="fromage-lab"))
_DEFAULT_CONFIG_FILE = CONFIG_DIR / "fromage-lab.yaml"
CONFIG_FILE = Path(os.environ.get("FROMAGE_LAB_CONFIG", _DEFAULT_CONFIG_FILE))
DEFAULT_RUNS_DIR = DATA_DIR / "runs"

CONFIG_ENV_VAR = "FROMAGE_LAB_CONFIG"
LOG_LEVEL_ENV_VAR = "FROMAGE_LAB_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Exit codes beyond click's own (1 for ClickException, 2 for usage errors)
EXIT_DIVERGED = 3
EXIT_DESCENT_BELOW_THRESHOLD = 4
EXIT_BOUND_VIOLATION = 5

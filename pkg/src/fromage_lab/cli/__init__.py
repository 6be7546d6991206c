"""fromage-lab CLI package.

This package backs the `fromage-lab` entrypoint.
"""

from .app import cli
from .config import LabConfig

__all__ = ["LabConfig", "cli"]

"""
PyTest configuration and shared fixtures for fromage-lab tests.

MNIST-backed acceptance tests read the four IDX files from the directory named
by ``FROMAGE_LAB_MNIST_DIR`` and are skipped when it is not set.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project paths
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT / "src"))

from fromage_lab.data import Dataset, synthetic_gaussian_classes  # noqa: E402

MNIST_ENV_VAR = "FROMAGE_LAB_MNIST_DIR"
MNIST_FILES = {
    "images": "train-images-idx3-ubyte",
    "labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line(
        "markers", f"mnist: marks tests that need the MNIST IDX files in ${MNIST_ENV_VAR}"
    )


@pytest.fixture(scope="session")
def mnist_dir() -> Path:
    """Directory holding the MNIST IDX files."""
    value = os.environ.get(MNIST_ENV_VAR)
    if not value:
        pytest.skip(f"{MNIST_ENV_VAR} not set")
    path = Path(value)
    missing = [name for name in MNIST_FILES.values() if not (path / name).exists()]
    if missing:
        pytest.skip(f"MNIST files missing from {path}: {missing}")
    return path


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def blobs() -> Dataset:
    """Small, well-separated three-class problem."""
    return synthetic_gaussian_classes(num_classes=3, d=6, per_class=20, separation=4.0, seed=7)


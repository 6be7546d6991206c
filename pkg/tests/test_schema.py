"""Tests for the typed run configuration."""

from __future__ import annotations

import pytest
import yaml

from fromage_lab.data import LossKind
from fromage_lab.exceptions import ConfigError
from fromage_lab.optim import OptimizerKind
from fromage_lab.schema import RunConfig, build_config, default_config, to_run_config, to_yaml


def test_defaults_round_trip_through_yaml():
    config = to_run_config(default_config())
    assert config == RunConfig()
    assert config.optimizer.kind is OptimizerKind.FROMAGE
    assert config.dataset.loss is LossKind.SOFTMAX_CROSS_ENTROPY
    assert yaml.safe_load(to_yaml(config))["depth_sweep"]["grid"]["sgd"] == [1.0, 0.1, 0.01]


def test_file_then_overrides(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({"optimizer": {"kind": "adam", "eta": 0.001}, "seed": 4}), encoding="utf-8")
    config = to_run_config(build_config(path, ["optimizer.eta=0.002", "model.nonlinearity=leaky_relu(0.25)"]))
    assert config.optimizer.kind is OptimizerKind.ADAM
    assert config.optimizer.eta == 0.002
    assert config.seed == 4
    assert config.model.nonlinearity == "leaky_relu(0.25)"


@pytest.mark.parametrize(
    "override",
    ["optimiser.eta=0.1", "model.colour=red", "no_equals_sign"],
)
def test_bad_overrides_are_rejected(override):
    with pytest.raises(ConfigError):
        build_config(overrides=[override])


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        build_config(tmp_path / "absent.yaml")


@pytest.mark.parametrize(
    ("override", "match"),
    [
        ("model.bias=true", "bias-free"),
        ("model.depth=0", "at least 1"),
        ("optimizer.kind=rmsprop", "rmsprop"),
        ("model.nonlinearity=tanh", "tanh"),
        ("verify_bounds.method=power", "lapack or jacobi"),
    ],
)
def test_invalid_values(override, match):
    with pytest.raises(ConfigError, match=match):
        to_run_config(build_config(overrides=[override]))


def test_depth_sweep_grid_accepts_new_optimisers():
    config = to_run_config(build_config(overrides=["depth_sweep.grid.adam=[0.001]"]))
    assert config.depth_sweep.grid == {"fromage": [0.1, 0.01, 0.001], "sgd": [1.0, 0.1, 0.01], "adam": [0.001]}
    with pytest.raises(ConfigError):
        to_run_config(build_config(overrides=["depth_sweep.grid.newton=[0.1]"]))

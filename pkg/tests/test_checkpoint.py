"""Tests for the binary checkpoint format."""

from __future__ import annotations

import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from fromage_lab.checkpoint import MAGIC, load_checkpoint, save_checkpoint, sidecar_path
from fromage_lab.exceptions import CheckpointError
from fromage_lab.net import Nonlinearity, forward
from tests.helpers import make_net


@pytest.fixture
def saved(tmp_path):
    net = make_net((5, 4, 4, 3), Nonlinearity.leaky_relu(0.25), seed=8)
    path = save_checkpoint(net, tmp_path / "ckpt" / "epoch-000.frmg")
    return net, path


def test_save_then_load_is_exact(saved):
    net, path = saved
    loaded = load_checkpoint(path)
    assert loaded.config == net.config
    for a, b in zip(net.weights, loaded.weights, strict=True):
        assert_array_equal(a, b)


def test_layout(saved):
    net, path = saved
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    header = 4 + 4 * (2 + len(net.config.widths))
    assert len(raw) == header + 8 * sum(w.size for w in net.weights)
    assert sidecar_path(path).name == "epoch-000.frmg.json"
    assert json.loads(sidecar_path(path).read_text())["nonlinearity"] == "leaky_relu(0.25)"


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "nope.frmg")


def test_bad_magic(saved):
    _, path = saved
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(CheckpointError, match="bad magic"):
        load_checkpoint(path)


def test_truncated_payload(saved):
    _, path = saved
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CheckpointError, match="truncated weight payload"):
        load_checkpoint(path)


def test_trailing_bytes(saved):
    _, path = saved
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(path)


def test_missing_or_inconsistent_sidecar(saved):
    _, path = saved
    sidecar = sidecar_path(path)
    config = json.loads(sidecar.read_text())
    config["widths"] = [5, 4, 4, 2]
    sidecar.write_text(json.dumps(config))
    with pytest.raises(CheckpointError, match="differ from sidecar"):
        load_checkpoint(path)
    sidecar.write_text("{}")
    with pytest.raises(CheckpointError, match="invalid config"):
        load_checkpoint(path)
    sidecar.unlink()
    with pytest.raises(CheckpointError, match="sidecar"):
        load_checkpoint(path)


def test_weights_are_little_endian_doubles(saved):
    net, path = saved
    raw = path.read_bytes()
    header = 4 + 4 * (2 + len(net.config.widths))
    first = np.frombuffer(raw, dtype="<f8", count=net.weights[0].size, offset=header)
    assert_array_equal(first.reshape(net.weights[0].shape), net.weights[0])


def test_slope_with_many_digits_survives_the_sidecar(tmp_path, rng):
    net = make_net((4, 6, 3), Nonlinearity.leaky_relu(0.123456789), seed=5)
    loaded = load_checkpoint(save_checkpoint(net, tmp_path / "fine.frmg"))
    assert loaded.config.nonlinearity.slope == 0.123456789
    assert loaded.config == net.config
    x = rng.standard_normal((4, 7))
    assert_array_equal(forward(loaded, x).output, forward(net, x).output)

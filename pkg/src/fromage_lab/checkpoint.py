"""Network checkpoints: a flat binary weight file plus a JSON config sidecar.

Binary layout (little-endian)::

    b"FRMG" | u32 version | u32 L | u32 widths[L + 1] | f64 W_1 ... f64 W_L

Each weight payload is row-major ``n_l x n_{l-1}``. The sidecar (the binary
file name plus ``.json``, e.g. ``epoch-003.frmg.json``) holds the :class:`MlpConfig`.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError
from .net import Mlp, MlpConfig

logger = logging.getLogger(__name__)

MAGIC = b"FRMG"
FORMAT_VERSION = 1
CHECKPOINT_SUFFIX = ".frmg"


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_checkpoint(net: Mlp, path: str | Path) -> Path:
    """Write ``net`` to ``path`` and its config to the JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    widths = net.config.widths
    header = MAGIC + struct.pack(f"<{2 + len(widths)}I", FORMAT_VERSION, net.depth, *widths)
    payload = b"".join(np.ascontiguousarray(w, dtype="<f8").tobytes() for w in net.weights)
    path.write_bytes(header + payload)
    sidecar_path(path).write_text(
        json.dumps(net.config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.debug(f"Saved checkpoint {path}")
    return path


def load_checkpoint(path: str | Path) -> Mlp:
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Raises
    ------
    CheckpointError
        If the file is missing, truncated, has the wrong magic/version, or its
        header disagrees with the sidecar.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 12:
        raise CheckpointError(f"{path}: truncated header")
    version, depth = struct.unpack_from("<2I", raw, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = 12
    widths_end = offset + 4 * (depth + 1)
    if len(raw) < widths_end:
        raise CheckpointError(f"{path}: truncated widths")
    widths = struct.unpack_from(f"<{depth + 1}I", raw, offset)
    offset = widths_end

    sidecar = sidecar_path(path)
    if not sidecar.exists():
        raise CheckpointError(f"missing config sidecar {sidecar}")
    try:
        config = MlpConfig.from_dict(json.loads(sidecar.read_text(encoding="utf-8")))
    except (KeyError, ValueError, TypeError) as e:
        raise CheckpointError(f"{sidecar}: invalid config ({e})") from e
    if tuple(widths) != config.widths:
        raise CheckpointError(f"{path}: header widths {widths} differ from sidecar {config.widths}")

    weights = []
    for rows, cols in config.layer_shapes():
        count = rows * cols
        if len(raw) < offset + 8 * count:
            raise CheckpointError(f"{path}: truncated weight payload at byte {offset}")
        w = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).astype(np.float64)
        weights.append(w.reshape(rows, cols))
        offset += 8 * count
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return Mlp(config=config, weights=weights)

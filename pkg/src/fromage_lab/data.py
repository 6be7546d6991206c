"""
Datasets, batching, IDX file I/O and loss definitions.

Examples are stored as columns: a dataset of ``N`` examples of dimension ``d``
holds a ``d x N`` input matrix, so a forward pass over a batch is one chain of
matrix products.
"""

from __future__ import annotations

import logging
import math
import struct
from enum import StrEnum
from pathlib import Path
from typing import Any

import attrs
import numpy as np
import scipy.special
from numpy.typing import NDArray

from .exceptions import EmptyBatchError, IdxFormatError, LabelRangeError, ShapeMismatchError
from .linalg import Matrix, as_matrix

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
PIXEL_SCALE = 255.0


class LossKind(StrEnum):
    """Supported training objectives."""

    SOFTMAX_CROSS_ENTROPY = "softmax_cross_entropy"
    MEAN_SQUARED_ERROR = "mean_squared_error"


def _convert_to_int64_array(x: Any) -> NDArray[np.int64]:
    return np.asarray(x, dtype=np.int64).reshape(-1)


def _optional_matrix(x: Any) -> Matrix | None:
    return None if x is None else as_matrix(x, name="targets")


def _batch_inputs(x: Any) -> Matrix:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 0:
        raise EmptyBatchError("a batch needs at least one example")
    return as_matrix(arr, name="inputs")


@attrs.define(kw_only=True, eq=False, frozen=True)
class Dataset:
    """
    Immutable labelled dataset.

    Attributes
    ----------
    inputs : numpy.ndarray
        ``d x N`` matrix; column ``i`` is example ``i``.
    labels : numpy.ndarray
        ``N`` class indices in ``[0, num_classes)``.
    num_classes : int
        Number of classes.
    source : str
        Free-form provenance note recorded in run summaries.
    """

    inputs: Matrix = attrs.field(converter=lambda x: as_matrix(x, name="inputs"))
    labels: NDArray[np.int64] = attrs.field(converter=_convert_to_int64_array)
    num_classes: int
    source: str = "memory"

    def __attrs_post_init__(self) -> None:
        if self.labels.shape[0] != self.inputs.shape[1]:
            raise ShapeMismatchError(
                "labels and input columns differ in count",
                self.labels.shape,
                self.inputs.shape,
            )
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        _check_labels(self.labels, self.num_classes)

    @property
    def size(self) -> int:
        return int(self.inputs.shape[1])

    @property
    def dim(self) -> int:
        return int(self.inputs.shape[0])

    def take(self, indices: NDArray[np.int64]) -> "Batch":
        """Materialise the columns ``indices`` as a :class:`Batch`."""
        idx = np.asarray(indices, dtype=np.int64)
        return Batch(indices=idx, inputs=self.inputs[:, idx], labels=self.labels[idx])

    def full_batch(self) -> "Batch":
        return self.take(np.arange(self.size, dtype=np.int64))

    def subset(self, size: int, seed: int) -> "Dataset":
        """Seeded subset of ``size`` examples, kept in original order."""
        if size >= self.size:
            return self
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(self.size, size=size, replace=False))
        return Dataset(
            inputs=self.inputs[:, idx],
            labels=self.labels[idx],
            num_classes=self.num_classes,
            source=f"{self.source}[subset {size} seed {seed}]",
        )


@attrs.define(kw_only=True, eq=False, frozen=True)
class Batch:
    """
    Columns of a dataset selected for one step.

    ``targets`` is an explicit regression target matrix (``n_L x B``); when it
    is absent, mean squared error regresses onto one-hot labels.
    """

    indices: NDArray[np.int64] = attrs.field(converter=_convert_to_int64_array)
    inputs: Matrix = attrs.field(converter=_batch_inputs)
    labels: NDArray[np.int64] | None = attrs.field(
        default=None,
        converter=lambda x: None if x is None else _convert_to_int64_array(x),
    )
    targets: Matrix | None = attrs.field(default=None, converter=_optional_matrix)

    def __attrs_post_init__(self) -> None:
        if len(np.unique(self.indices)) != len(self.indices):
            raise ValueError("batch indices must be unique")

    @classmethod
    def from_arrays(
        cls,
        inputs: Any,
        labels: Any | None = None,
        targets: Any | None = None,
    ) -> "Batch":
        """Build a batch that is not backed by a :class:`Dataset`."""
        x = _batch_inputs(inputs)
        return cls(
            indices=np.arange(x.shape[1], dtype=np.int64),
            inputs=x,
            labels=labels,
            targets=targets,
        )

    @property
    def size(self) -> int:
        return int(self.inputs.shape[1])


def _check_labels(labels: NDArray[np.int64], num_classes: int) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelRangeError(
            f"labels must lie in [0, {num_classes}); got range "
            f"[{int(labels.min())}, {int(labels.max())}]"
        )


def one_hot(labels: NDArray[np.int64], num_classes: int) -> Matrix:
    """``num_classes x N`` one-hot matrix."""
    _check_labels(labels, num_classes)
    out = np.zeros((num_classes, labels.shape[0]), dtype=np.float64)
    out[labels, np.arange(labels.shape[0])] = 1.0
    return out


# ---------------------------------------------------------------------------
# Losses. Each returns the batch-averaged loss and its derivative with respect
# to the network output.
# ---------------------------------------------------------------------------


def softmax_cross_entropy(logits: Matrix, labels: NDArray[np.int64]) -> tuple[float, Matrix]:
    """
    Averaged softmax cross-entropy.

    Parameters
    ----------
    logits : numpy.ndarray
        ``C x B`` network outputs.
    labels : numpy.ndarray
        ``B`` class indices.

    Returns
    -------
    tuple of (float, numpy.ndarray)
        Loss and ``dL/dlogits``.
    """
    batch_size = logits.shape[1]
    if batch_size == 0:
        raise EmptyBatchError("softmax_cross_entropy on an empty batch")
    _check_labels(labels, logits.shape[0])
    cols = np.arange(batch_size)
    log_norm = scipy.special.logsumexp(logits, axis=0)
    loss = float(np.mean(log_norm - logits[labels, cols]))
    grad = scipy.special.softmax(logits, axis=0)
    grad[labels, cols] -= 1.0
    grad /= batch_size
    return loss, grad


def mean_squared_error(outputs: Matrix, targets: Matrix) -> tuple[float, Matrix]:
    """
    ``(1 / 2B) * sum ||f(x_i) - y_i||^2``, so a scalar output gives ``w^2 / 2``.
    """
    if outputs.shape != targets.shape:
        raise ShapeMismatchError("outputs and targets differ", outputs.shape, targets.shape)
    batch_size = outputs.shape[1]
    if batch_size == 0:
        raise EmptyBatchError("mean_squared_error on an empty batch")
    diff = outputs - targets
    loss = 0.5 * float(np.sum(diff * diff)) / batch_size
    return loss, diff / batch_size


def loss_with_gradient(
    outputs: Matrix, batch: Batch, loss_kind: LossKind | str
) -> tuple[float, Matrix]:
    """Dispatch to the loss named by ``loss_kind``."""
    kind = LossKind(loss_kind)
    if batch.size == 0:
        raise EmptyBatchError("empty batch")
    if kind is LossKind.SOFTMAX_CROSS_ENTROPY:
        if batch.labels is None:
            raise LabelRangeError("softmax cross-entropy needs class labels")
        return softmax_cross_entropy(outputs, batch.labels)
    if batch.targets is not None:
        targets = batch.targets
    elif batch.labels is not None:
        targets = one_hot(batch.labels, outputs.shape[0])
    else:
        raise LabelRangeError("mean squared error needs targets or labels")
    return mean_squared_error(outputs, targets)


# ---------------------------------------------------------------------------
# IDX files
# ---------------------------------------------------------------------------


def _read_header(raw: bytes, path: Path, expected_magic: int, n_dims: int) -> tuple[int, ...]:
    header_size = 4 * (1 + n_dims)
    if len(raw) < header_size:
        raise IdxFormatError(path, len(raw), f"truncated header (need {header_size} bytes)")
    magic, *dims = struct.unpack(f">{1 + n_dims}I", raw[:header_size])
    if magic != expected_magic:
        raise IdxFormatError(path, 0, f"bad magic 0x{magic:08x} (expected 0x{expected_magic:08x})")
    return tuple(dims)


def load_mnist_idx(images_path: str | Path, labels_path: str | Path) -> Dataset:
    """
    Load an IDX image/label file pair.

    Pixels are scaled from bytes to ``[0, 1]`` and each image is flattened
    row-major into one input column.

    Raises
    ------
    IdxFormatError
        On magic mismatch, count mismatch or truncated payload; the message
        names the byte offset.
    """
    images_path = Path(images_path)
    labels_path = Path(labels_path)
    image_raw = images_path.read_bytes()
    label_raw = labels_path.read_bytes()

    count, rows, cols = _read_header(image_raw, images_path, IDX_IMAGES_MAGIC, 3)
    (label_count,) = _read_header(label_raw, labels_path, IDX_LABELS_MAGIC, 1)
    if count != label_count:
        raise IdxFormatError(
            labels_path, 4, f"count mismatch: {count} images vs {label_count} labels"
        )

    pixel_bytes = count * rows * cols
    if len(image_raw) < 16 + pixel_bytes:
        raise IdxFormatError(
            images_path, len(image_raw), f"truncated payload (need {16 + pixel_bytes} bytes)"
        )
    if len(label_raw) < 8 + count:
        raise IdxFormatError(labels_path, len(label_raw), f"truncated payload (need {8 + count} bytes)")

    pixels = np.frombuffer(image_raw, dtype=np.uint8, count=pixel_bytes, offset=16)
    labels = np.frombuffer(label_raw, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    inputs = pixels.reshape(count, rows * cols).T.astype(np.float64) / PIXEL_SCALE
    num_classes = max(10, int(labels.max()) + 1) if count else 10
    logger.info(f"Loaded {count} IDX images of {rows}x{cols} from {images_path}")
    return Dataset(
        inputs=inputs,
        labels=labels,
        num_classes=num_classes,
        source=f"idx:{images_path.name}",
    )


def write_idx(
    dataset: Dataset,
    images_path: str | Path,
    labels_path: str | Path,
    image_shape: tuple[int, int] | None = None,
) -> None:
    """
    Write a dataset as an IDX pair, quantising inputs to bytes.

    ``image_shape`` defaults to a square when ``d`` is a perfect square and to
    ``(1, d)`` otherwise.
    """
    d = dataset.dim
    if image_shape is None:
        side = math.isqrt(d)
        image_shape = (side, side) if side * side == d else (1, d)
    rows, cols = image_shape
    if rows * cols != d:
        raise ShapeMismatchError("image shape does not cover the input dimension", image_shape, (d,))
    if dataset.num_classes > 256:
        raise ValueError("IDX labels are single bytes; at most 256 classes")

    quantised = np.clip(np.rint(dataset.inputs * PIXEL_SCALE), 0, 255).astype(np.uint8)
    header = struct.pack(">4I", IDX_IMAGES_MAGIC, dataset.size, rows, cols)
    Path(images_path).write_bytes(header + quantised.T.tobytes(order="C"))
    label_header = struct.pack(">2I", IDX_LABELS_MAGIC, dataset.size)
    Path(labels_path).write_bytes(label_header + dataset.labels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# Synthetic data and batching
# ---------------------------------------------------------------------------


def _class_means(num_classes: int, d: int) -> Matrix:
    if num_classes <= d:
        return np.eye(d, num_classes)
    # Fixed directions, independent of the data seed.
    means = np.random.default_rng(0).standard_normal((d, num_classes))
    return means / np.linalg.norm(means, axis=0, keepdims=True)


def synthetic_gaussian_classes(
    num_classes: int,
    d: int,
    per_class: int,
    separation: float,
    seed: int,
) -> Dataset:
    """
    Gaussian blobs ``N(separation * mu_c, I)`` around fixed unit vectors.

    ``mu_c`` is the ``c``-th standard basis vector when ``num_classes <= d``.
    """
    if min(num_classes, d, per_class) < 1:
        raise ValueError("num_classes, d and per_class must be positive")
    rng = np.random.default_rng(seed)
    means = _class_means(num_classes, d)
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), per_class)
    noise = rng.standard_normal((d, num_classes * per_class))
    inputs = separation * means[:, labels] + noise
    return Dataset(
        inputs=inputs,
        labels=labels,
        num_classes=num_classes,
        source=f"synthetic(c={num_classes}, d={d}, n={per_class}, sep={separation}, seed={seed})",
    )


def batches(dataset: Dataset, batch_size: int, epoch_seed: int) -> list[Batch]:
    """
    Partition a seeded permutation of the dataset into batches.

    Every index appears exactly once; the last batch may be short.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    order = np.random.default_rng(epoch_seed).permutation(dataset.size)
    return [dataset.take(order[i : i + batch_size]) for i in range(0, dataset.size, batch_size)]

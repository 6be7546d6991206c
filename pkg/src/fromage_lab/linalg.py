"""
Dense real-matrix kernel: validation, norms and spectral extremes.

Every numeric quantity in fromage-lab (weights, gradients, Jacobians,
activations stored as columns) is a 2-D, row-major float64 numpy array.
"""

from __future__ import annotations

import logging
import math
from typing import Any, Literal

import attrs
import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .exceptions import ConvergenceError, NonFiniteError, ShapeMismatchError

logger = logging.getLogger(__name__)

Matrix = NDArray[np.float64]
SpectralMethod = Literal["lapack", "jacobi"]

JACOBI_TOLERANCE = 1e-13
JACOBI_MAX_SWEEPS = 60


def as_matrix(data: Any, *, name: str = "matrix") -> Matrix:
    """
    Convert input to a validated 2-D float64 matrix.

    Parameters
    ----------
    data : array-like
        Matrix entries. 1-D input is promoted to a column vector.
    name : str, default "matrix"
        Name used in error messages.

    Returns
    -------
    numpy.ndarray
        C-ordered float64 array with ``ndim == 2``.

    Raises
    ------
    ShapeMismatchError
        If the input has more than two dimensions or a zero-length axis.
    NonFiniteError
        If any entry is NaN or infinite.
    """
    m = np.ascontiguousarray(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    elif m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeMismatchError(f"{name} must be a non-empty 2-D matrix", m.shape)
    check_finite(m, name=name)
    return m


def check_finite(m: Matrix, *, name: str = "matrix") -> None:
    """Raise :class:`NonFiniteError` if ``m`` holds NaN or Inf."""
    if not np.all(np.isfinite(m)):
        bad = int(np.count_nonzero(~np.isfinite(m)))
        raise NonFiniteError(f"{name} of shape {m.shape} has {bad} non-finite entries")


def _require_same_shape(a: Matrix, b: Matrix, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{op} needs equal shapes", a.shape, b.shape)


def frobenius_norm(m: Matrix) -> float:
    """Return ``sqrt(sum(m**2))``."""
    return float(np.linalg.norm(m))


def inner_product_frobenius(a: Matrix, b: Matrix) -> float:
    """Return the Frobenius inner product ``sum(a * b)``."""
    _require_same_shape(a, b, "inner_product_frobenius")
    return float(np.vdot(a, b))


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with shape checking."""
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul inner dimensions differ", a.shape, b.shape)
    out = a @ b
    check_finite(out, name="matmul result")
    return out


def add(a: Matrix, b: Matrix) -> Matrix:
    _require_same_shape(a, b, "add")
    out = a + b
    check_finite(out, name="add result")
    return out


def sub(a: Matrix, b: Matrix) -> Matrix:
    _require_same_shape(a, b, "sub")
    out = a - b
    check_finite(out, name="sub result")
    return out


def scale(a: Matrix, c: float) -> Matrix:
    out = c * a
    check_finite(out, name="scale result")
    return out


def transpose(a: Matrix) -> Matrix:
    return np.ascontiguousarray(a.T)


@attrs.define(kw_only=True, frozen=True)
class ConditionReport:
    """
    Extreme singular values of a matrix and its condition number.

    Attributes
    ----------
    sigma_max : float
        Largest singular value.
    sigma_min : float
        Smallest of the ``min(rows, cols)`` singular values.
    kappa : float
        ``sigma_max / sigma_min``; ``inf`` when ``sigma_min`` is zero.
    """

    sigma_max: float
    sigma_min: float
    kappa: float

    @classmethod
    def from_singular_values(cls, values: NDArray[np.float64]) -> "ConditionReport":
        sigma_max = float(np.max(values))
        sigma_min = float(np.min(values))
        kappa = sigma_max / sigma_min if sigma_min > 0.0 else math.inf
        # Round-off can leave a ratio a hair below one for isometries.
        return cls(sigma_max=sigma_max, sigma_min=sigma_min, kappa=max(kappa, 1.0))

    @property
    def is_singular(self) -> bool:
        """Whether the smallest singular value is exactly zero."""
        return math.isinf(self.kappa)


def jacobi_singular_values(
    m: Matrix,
    *,
    tol: float = JACOBI_TOLERANCE,
    max_sweeps: int = JACOBI_MAX_SWEEPS,
) -> NDArray[np.float64]:
    """
    Singular values by one-sided (Hestenes) Jacobi rotations.

    The routine orthogonalises the columns of ``m`` (or ``m.T`` when ``m`` is
    wide) so that it always works on the smaller Gram dimension. Converged
    column norms are the singular values.

    Raises
    ------
    ConvergenceError
        If a full sweep still rotates after ``max_sweeps`` sweeps.
    """
    work = np.array(m.T if m.shape[1] > m.shape[0] else m, dtype=np.float64)
    n = work.shape[1]
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                col_p = work[:, p]
                col_q = work[:, q]
                alpha = float(col_p @ col_p)
                beta = float(col_q @ col_q)
                gamma = float(col_p @ col_q)
                if gamma == 0.0 or abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * col_p - s * col_q
                new_q = s * col_p + c * col_q
                work[:, p] = new_p
                work[:, q] = new_q
        if not rotated:
            return np.sort(np.linalg.norm(work, axis=0))[::-1]
    raise ConvergenceError(m.shape, max_sweeps)


def singular_values(m: Matrix, *, method: SpectralMethod = "lapack") -> NDArray[np.float64]:
    """Return the ``min(rows, cols)`` singular values of ``m`` in descending order."""
    if method == "jacobi":
        return jacobi_singular_values(m)
    try:
        return scipy.linalg.svdvals(m, check_finite=True)
    except np.linalg.LinAlgError as e:
        raise ConvergenceError(m.shape, 0) from e


def singular_extremes(m: Matrix, *, method: SpectralMethod = "lapack") -> ConditionReport:
    """
    Largest and smallest singular values and the condition number.

    Parameters
    ----------
    m : numpy.ndarray
        Matrix with ``min(rows, cols) >= 1``.
    method : {"lapack", "jacobi"}, default "lapack"
        Backend. LAPACK is used for speed; the Jacobi routine serves as an
        independent cross-check.

    Returns
    -------
    ConditionReport
    """
    check_finite(m)
    return ConditionReport.from_singular_values(singular_values(m, method=method))


def condition_number(m: Matrix, *, method: SpectralMethod = "lapack") -> float:
    return singular_extremes(m, method=method).kappa

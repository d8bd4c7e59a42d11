"""Small-matrix algebra on d x d real matrices, d in {2, 3}.

Every function accepts a single matrix of shape ``(d, d)`` or a batch of shape
``(..., d, d)`` and broadcasts over the leading axes.
"""
from typing import Tuple

import numpy as np

from config import TOLERANCES
from errors import DimensionMismatch

MatD = np.ndarray

SUPPORTED_DIMS = (2, 3)


def as_matd(X, dim: int = None) -> MatD:
    """Validate and convert to a float64 array of square d x d matrices."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DimensionMismatch(f"expected (..., d, d) matrices, got shape {A.shape}")
    if A.shape[-1] not in SUPPORTED_DIMS:
        raise DimensionMismatch(f"matrix dimension must be 2 or 3, got {A.shape[-1]}")
    if dim is not None and A.shape[-1] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {A.shape[-1]}")
    return A


def transpose(X: MatD) -> MatD:
    return np.swapaxes(X, -1, -2)


def decompose(X: MatD) -> Tuple[MatD, MatD]:
    """Split into symmetric and antisymmetric parts, X = X_s + X_a."""
    X = as_matd(X)
    Xt = transpose(X)
    return 0.5 * (X + Xt), 0.5 * (X - Xt)


def sym(X: MatD) -> MatD:
    X = as_matd(X)
    return 0.5 * (X + transpose(X))


def skew(X: MatD) -> MatD:
    X = as_matd(X)
    return 0.5 * (X - transpose(X))


def inner(X: MatD, Y: MatD) -> np.ndarray:
    """Frobenius inner product sum_ij X_ij Y_ij."""
    X = as_matd(X)
    Y = as_matd(Y)
    if X.shape[-1] != Y.shape[-1]:
        raise DimensionMismatch(f"inner product of {X.shape[-1]}x{X.shape[-1]} and {Y.shape[-1]}x{Y.shape[-1]} matrices")
    return np.einsum("...ij,...ij->...", X, Y)


def norm(X: MatD) -> np.ndarray:
    X = as_matd(X)
    return np.sqrt(np.einsum("...ij,...ij->...", X, X))


def is_antisymmetric(X: MatD, tol: float = None) -> bool:
    tol = TOLERANCES.antisymmetry if tol is None else tol
    X = as_matd(X)
    scale = np.maximum(1.0, norm(X))
    return bool(np.all(norm(X + transpose(X)) <= tol * scale))


def spin(rate, dim: int = 2) -> MatD:
    """Antisymmetric matrix with spin ``rate``.

    For d = 2, ``rate`` is a scalar (or array of scalars) w giving [[0, w], [-w, 0]].
    For d = 3, ``rate`` is an axial vector (..., 3) giving the cross-product matrix.
    """
    rate = np.asarray(rate, dtype=np.float64)
    if dim == 2:
        W = np.zeros(rate.shape + (2, 2))
        W[..., 0, 1] = rate
        W[..., 1, 0] = -rate
        return W
    if dim == 3:
        if rate.shape[-1:] != (3,):
            raise DimensionMismatch(f"3D spin needs an axial vector, got shape {rate.shape}")
        W = np.zeros(rate.shape[:-1] + (3, 3))
        W[..., 0, 1] = -rate[..., 2]
        W[..., 0, 2] = rate[..., 1]
        W[..., 1, 0] = rate[..., 2]
        W[..., 1, 2] = -rate[..., 0]
        W[..., 2, 0] = -rate[..., 1]
        W[..., 2, 1] = rate[..., 0]
        return W
    raise DimensionMismatch(f"matrix dimension must be 2 or 3, got {dim}")


def random_matrices(rng: np.random.Generator, count: int, dim: int,
                    low: float = -2.0, high: float = 2.0) -> MatD:
    return rng.uniform(low, high, size=(count, dim, dim))


def random_antisymmetric(rng: np.random.Generator, count: int, dim: int,
                         low: float = -1.0, high: float = 1.0) -> MatD:
    return skew(rng.uniform(low, high, size=(count, dim, dim)))


def scaled_power(X: MatD, magnitude: np.ndarray, exponent: float) -> MatD:
    """magnitude**exponent * X, batched.

    Used for the |X|^{p-2} X family; for exponent > 0 a zero magnitude gives 0,
    for exponent == 0 the factor is 1.
    """
    return (np.asarray(magnitude) ** exponent)[..., None, None] * X

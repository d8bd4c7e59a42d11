import numpy as np
import pytest

from errors import DimensionMismatch
from tensor_core import (
    as_matd, decompose, inner, is_antisymmetric, norm, random_antisymmetric, scaled_power, skew, spin, sym,
)


def test_decompose_splits_into_symmetric_and_antisymmetric_parts(rng):
    X = rng.uniform(-2.0, 2.0, size=(50, 3, 3))
    Xs, Xa = decompose(X)

    assert np.allclose(Xs + Xa, X)
    assert np.allclose(Xs, np.swapaxes(Xs, -1, -2))
    assert np.allclose(Xa, -np.swapaxes(Xa, -1, -2))
    # the two parts are Frobenius-orthogonal
    assert np.max(np.abs(inner(Xs, Xa))) < 1e-12
    assert np.allclose(sym(X), Xs)
    assert np.allclose(skew(X), Xa)


def test_norm_is_frobenius():
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert norm(X) == pytest.approx(np.sqrt(30.0))
    assert inner(X, X) == pytest.approx(30.0)


def test_as_matd_rejects_bad_shapes():
    with pytest.raises(DimensionMismatch):
        as_matd(np.zeros((2, 3)))
    with pytest.raises(DimensionMismatch):
        as_matd(np.zeros((4, 4)))
    with pytest.raises(DimensionMismatch):
        as_matd(np.zeros((2, 2)), dim=3)


def test_inner_rejects_mixed_dimensions():
    with pytest.raises(DimensionMismatch):
        inner(np.eye(2), np.eye(3))


def test_spin_2d_and_3d():
    W2 = spin(0.5, 2)
    assert np.allclose(W2, [[0.0, 0.5], [-0.5, 0.0]])

    w = np.array([1.0, 2.0, 3.0])
    W3 = spin(w, 3)
    v = np.array([0.3, -1.0, 2.0])
    assert np.allclose(W3 @ v, np.cross(w, v))
    assert is_antisymmetric(W3)

    with pytest.raises(DimensionMismatch):
        spin([1.0, 2.0], 3)


def test_random_antisymmetric_is_antisymmetric(rng):
    assert is_antisymmetric(random_antisymmetric(rng, 20, 3))
    assert not is_antisymmetric(np.eye(3))


def test_scaled_power_handles_zero_magnitude():
    X = np.zeros((2, 2))
    assert np.all(scaled_power(X, norm(X), 1.0) == 0.0)
    Y = np.eye(2)
    assert np.allclose(scaled_power(Y, norm(Y), 0.0), Y)

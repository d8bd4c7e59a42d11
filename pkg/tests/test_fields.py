import numpy as np
import pytest

from errors import DimensionMismatch
from fields import FieldD


def _torus(M):
    axis = 2.0 * np.pi * np.arange(M) / M
    return np.meshgrid(axis, axis, indexing="ij")


def test_spectral_gradient_is_exact_for_trigonometric_fields():
    M = 32
    x, y = _torus(M)
    values = np.stack([np.sin(x) * np.cos(2 * y), np.cos(3 * x)])
    field = FieldD(values=values, spacing=(2 * np.pi / M, 2 * np.pi / M), periodic=True)
    B = field.gradient()

    assert B.shape == (M, M, 2, 2)
    assert np.allclose(B[..., 0, 0], np.cos(x) * np.cos(2 * y), atol=1e-12)
    assert np.allclose(B[..., 0, 1], -2 * np.sin(x) * np.sin(2 * y), atol=1e-12)
    assert np.allclose(B[..., 1, 0], -3 * np.sin(3 * x), atol=1e-12)
    assert np.allclose(B[..., 1, 1], 0.0, atol=1e-12)


def test_channel_profile_places_shear_rate_in_B12():
    y = np.linspace(-1.0, 1.0, 21)
    field = FieldD.channel_profile(1.0 - y ** 2, dy=0.1)
    B = field.gradient()

    assert B.shape == (21, 2, 2)
    assert np.allclose(B[:, 0, 1], -2.0 * y)
    assert np.allclose(B[:, 0, 0], 0.0)
    assert np.allclose(B[:, 1, :], 0.0)


def test_lp_norm_uses_cell_volume():
    field = FieldD(values=np.ones((2, 4, 4)), spacing=(0.5, 0.5))
    assert field.cell_volume == pytest.approx(0.25)
    assert field.lp_norm(np.full((4, 4), 2.0), 2.0) == pytest.approx(np.sqrt(16 * 4 * 0.25))
    assert np.allclose(field.magnitude(), np.sqrt(2.0))


def test_field_shape_validation():
    with pytest.raises(DimensionMismatch):
        FieldD(values=np.ones((2, 4, 4)), spacing=(0.5,))
    with pytest.raises(DimensionMismatch):
        FieldD(values=np.ones((4, 4, 4)), spacing=(0.5, 0.5))
    with pytest.raises(DimensionMismatch):
        FieldD(values=np.ones((2, 4)), spacing=(0.5,), coords=(2,))

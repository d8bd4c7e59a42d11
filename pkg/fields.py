from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from errors import DimensionMismatch


@dataclass
class FieldD:
    """Sampled vector field on a uniform 1D or 2D grid.

    ``values`` has shape ``(ncomp, *grid)``. ``coords[a]`` is the spatial
    coordinate that grid axis ``a`` samples, so a channel profile u(y) is a
    two-component field on one axis with ``coords=(1,)``.
    """

    values: np.ndarray
    spacing: Tuple[float, ...]
    periodic: bool = False
    coords: Optional[Tuple[int, ...]] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.spacing = tuple(float(h) for h in self.spacing)
        if self.values.ndim < 2:
            raise DimensionMismatch("field values need shape (ncomp, *grid)")
        if len(self.spacing) != self.values.ndim - 1:
            raise DimensionMismatch(f"{self.values.ndim - 1} grid axes but {len(self.spacing)} spacings")
        if self.ncomp not in (2, 3):
            raise DimensionMismatch(f"field must have 2 or 3 components, got {self.ncomp}")
        if self.coords is None:
            self.coords = tuple(range(self.values.ndim - 1))
        if any(c >= self.ncomp for c in self.coords):
            raise DimensionMismatch(f"coordinate indices {self.coords} exceed dimension {self.ncomp}")

    @property
    def ncomp(self) -> int:
        return self.values.shape[0]

    @property
    def grid_shape(self) -> Tuple[int, ...]:
        return self.values.shape[1:]

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @classmethod
    def channel_profile(cls, u: np.ndarray, dy: float) -> "FieldD":
        u = np.asarray(u, dtype=np.float64)
        return cls(values=np.stack([u, np.zeros_like(u)]), spacing=(dy,), periodic=False, coords=(1,))

    def _derivative(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        if self.periodic:
            n = self.grid_shape[axis]
            k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
            if n % 2 == 0:
                k[n // 2] = 0.0
            shape = [1] * self.values.ndim
            shape[axis + 1] = n
            spectrum = np.fft.fft(self.values, axis=axis + 1)
            return np.fft.ifft(1j * k.reshape(shape) * spectrum, axis=axis + 1).real
        return np.gradient(self.values, h, axis=axis + 1, edge_order=2)

    def gradient(self) -> np.ndarray:
        """Velocity gradient B_ij = d v_i / d x_j at every node, shape (*grid, d, d)."""
        d = self.ncomp
        B = np.zeros(self.grid_shape + (d, d))
        for axis, j in enumerate(self.coords):
            deriv = self._derivative(axis)
            for i in range(d):
                B[..., i, j] = deriv[i]
        return B

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values ** 2, axis=0))

    def lp_norm(self, pointwise: np.ndarray, p: float) -> float:
        """(sum |f|^p dV)^{1/p} for a pointwise magnitude sampled on this grid."""
        return float((np.sum(np.abs(pointwise) ** p) * self.cell_volume) ** (1.0 / p))

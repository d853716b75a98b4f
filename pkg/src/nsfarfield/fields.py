"""Uniform grids on [-L, L)^d and vector fields living on them."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class ResolutionError(ValueError):
    """The grid cannot resolve the requested quantity."""


@dataclass(frozen=True)
class GridSpec:
    """Vertex-centred grid ``x_i = -L + i*dx`` with ``dx = 2L/n``.

    ``pad`` is the zero-padding factor used for every linear (non-periodic)
    convolution; the far-field window is ``|x| <= L/2``.
    """

    d: int = 2
    n: int = 1024
    L: float = 32.0
    pad: int = 2

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if self.L <= 0:
            raise ValueError("half-extent L must be positive")
        if self.pad < 2:
            raise ValueError("pad factor must be >= 2 for linear convolution")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.d

    @property
    def r_max(self) -> float:
        return self.L / 2.0

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.n)

    def mesh(self) -> list:
        return np.meshgrid(*([self.axis] * self.d), indexing="ij")

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.mesh()))

    def points(self) -> np.ndarray:
        """All grid points as an (n**d, d) array."""
        return np.stack([c.ravel() for c in self.mesh()], axis=1)

    def origin_index(self) -> tuple:
        return (self.n // 2,) * self.d

    def with_(self, **changes) -> "GridSpec":
        params = dict(d=self.d, n=self.n, L=self.L, pad=self.pad)
        params.update(changes)
        return GridSpec(**params)


@dataclass
class VectorField:
    """A d-component real field sampled on ``grid`` at time ``time``."""

    grid: GridSpec
    components: np.ndarray
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        expected = (self.grid.d,) + self.grid.shape
        if self.components.shape != expected:
            raise ValueError(f"components shape {self.components.shape} != {expected}")
        if not np.all(np.isfinite(self.components)):
            raise FloatingPointError("vector field contains non-finite values")
        if self.time < 0:
            raise ValueError("time must be nonnegative")

    def __getitem__(self, j):
        return self.components[j]

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.components ** 2, axis=0))

    def copy(self) -> "VectorField":
        return VectorField(self.grid, self.components.copy(), self.time, dict(self.meta))

    @classmethod
    def zeros(cls, grid: GridSpec, time: float = 0.0) -> "VectorField":
        return cls(grid, np.zeros((grid.d,) + grid.shape), time)

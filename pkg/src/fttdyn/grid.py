"""Periodic Fourier collocation grids.

Every weighted inner product in the package goes through the quadrature
weights stored here, so a grid fully defines the discrete L^2_mu geometry
of one coordinate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np

from .errors import DimensionError, ParameterError


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Collocation points, quadrature weights and differentiation matrices on ``[a, b)``."""

    n: int
    a: float
    b: float
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    d1: np.ndarray = field(repr=False)
    d2: np.ndarray = field(repr=False)

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def same_as(self, other: "Grid1D") -> bool:
        return self.n == other.n and self.a == other.a and self.b == other.b


def _readonly(arr):
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def _fourier_diff_matrices(n):
    """First and second derivative matrices on ``n`` equispaced points of [0, 2pi)."""
    h = 2.0 * np.pi / n
    m = np.arange(1, n)
    sign = np.where(m % 2 == 0, 1.0, -1.0)
    half = m * h / 2.0
    col1 = np.zeros(n)
    col2 = np.zeros(n)
    if n % 2:
        col1[1:] = 0.5 * sign / np.sin(half)
        col2[0] = -(n * n - 1) / 12.0
        col2[1:] = -0.5 * sign / (np.sin(half) * np.tan(half))
    else:
        col1[1:] = 0.5 * sign / np.tan(half)
        col2[0] = -np.pi**2 / (3.0 * h * h) - 1.0 / 6.0
        col2[1:] = -0.5 * sign / np.sin(half) ** 2
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    # D[j, k] depends on (j - k) mod n
    return col1[idx], col2[idx]


def fourier_grid(n: int, a: float, b: float) -> Grid1D:
    """Build an ``n``-point periodic Fourier grid on ``[a, b)``.

    Weights are the uniform periodic trapezoid rule ``(b - a) / n``.
    """
    if int(n) != n or n < 2:
        raise ParameterError(f"grid needs n >= 2 points, got {n}")
    n = int(n)
    a = float(a)
    b = float(b)
    if not (np.isfinite(a) and np.isfinite(b)) or b <= a:
        raise ParameterError(f"degenerate interval [{a}, {b})")
    length = b - a
    points = a + np.arange(n) * (length / n)
    weights = np.full(n, length / n)
    d1, d2 = _fourier_diff_matrices(n)
    scale = 2.0 * np.pi / length
    return Grid1D(
        n=n,
        a=a,
        b=b,
        points=_readonly(points),
        weights=_readonly(weights),
        d1=_readonly(d1 * scale),
        d2=_readonly(d2 * scale**2),
    )


def quad_inner(f, g, grid: Grid1D) -> float:
    """Weighted inner product ``sum_j w_j f_j g_j``."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != (grid.n,) or g.shape != (grid.n,):
        raise DimensionError(
            f"samples must have shape ({grid.n},), got {f.shape} and {g.shape}"
        )
    return float(np.dot(grid.weights * f, g))


@dataclass(frozen=True, eq=False)
class GridSet:
    """Ordered tensor-product grid, one :class:`Grid1D` per coordinate."""

    dims: tuple

    def __post_init__(self):
        dims = tuple(self.dims)
        if len(dims) < 2:
            raise ParameterError(f"need at least two dimensions, got {len(dims)}")
        if not all(isinstance(g, Grid1D) for g in dims):
            raise ParameterError("GridSet entries must be Grid1D")
        object.__setattr__(self, "dims", dims)

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple:
        return tuple(g.n for g in self.dims)

    @property
    def size(self) -> int:
        return prod(self.shape)

    @property
    def cell_volume(self) -> float:
        """Product of the (uniform) quadrature weights: the volume of one grid cell."""
        return float(prod(g.weights[0] for g in self.dims))

    def __len__(self):
        return len(self.dims)

    def __getitem__(self, i):
        return self.dims[i]

    def __iter__(self):
        return iter(self.dims)

    def same_as(self, other: "GridSet") -> bool:
        return self.d == other.d and all(g.same_as(h) for g, h in zip(self.dims, other.dims))

    def meshgrid(self):
        return np.meshgrid(*(g.points for g in self.dims), indexing="ij")

    def weight_tensor(self) -> np.ndarray:
        """Dense product quadrature weights on the full grid."""
        w = self.dims[0].weights
        for g in self.dims[1:]:
            w = np.multiply.outer(w, g.weights)
        return w

    def sqrt_weight_tensor(self) -> np.ndarray:
        return np.sqrt(self.weight_tensor())


def uniform_gridset(n: int, d: int, a: float = 0.0, b: float = 2.0 * np.pi) -> GridSet:
    grid = fourier_grid(n, a, b)
    return GridSet(tuple(grid for _ in range(d)))

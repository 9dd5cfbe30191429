"""Separable linear operators and the four-dimensional Fokker-Planck operator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .grid import GridSet

_IDENTITY, _DIAGONAL, _DENSE = 0, 1, 2


def _kind(mat):
    if np.array_equal(mat, np.eye(mat.shape[0])):
        return _IDENTITY
    if np.count_nonzero(mat - np.diag(np.diag(mat))) == 0:
        return _DIAGONAL
    return _DENSE


@dataclass(frozen=True, eq=False)
class SeparableOperator:
    """Sum of Kronecker-rank-1 terms ``L_i^(1) x ... x L_i^(d)``.

    ``terms[i][k]`` is the ``n_k x n_k`` factor of term ``i`` acting on
    coordinate ``k``. Factors left as ``None`` when constructing are
    replaced by identities.
    """

    shape: tuple
    terms: tuple
    labels: tuple = ()

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        terms = []
        for i, term in enumerate(self.terms):
            if len(term) != len(shape):
                raise DimensionError(f"term {i + 1} has {len(term)} factors, expected {len(shape)}")
            mats = []
            for k, (mat, n) in enumerate(zip(term, shape)):
                mat = np.eye(n) if mat is None else np.array(mat, dtype=float)
                if mat.shape != (n, n):
                    raise DimensionError(
                        f"factor ({i + 1}, {k + 1}) has shape {mat.shape}, expected ({n}, {n})"
                    )
                if not np.all(np.isfinite(mat)):
                    raise ParameterError(f"factor ({i + 1}, {k + 1}) is not finite")
                mat.setflags(write=False)
                mats.append(mat)
            terms.append(tuple(mats))
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "terms", tuple(terms))
        object.__setattr__(self, "labels", tuple(self.labels))
        kinds = tuple(tuple(_kind(m) for m in term) for term in terms)
        object.__setattr__(self, "_kinds", kinds)

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def rank(self) -> int:
        return len(self.terms)

    def factor(self, term: int, dim: int) -> np.ndarray:
        if not (0 <= term < self.rank and 0 <= dim < self.d):
            raise ParameterError(f"factor index ({term}, {dim}) out of range")
        return self.terms[term][dim]

    def is_identity(self, term: int, dim: int) -> bool:
        return self._kinds[term][dim] == _IDENTITY

    def norm_bound(self) -> float:
        """Upper bound on the spectral radius: sum over terms of products of factor 2-norms."""
        total = 0.0
        for term in self.terms:
            total += float(np.prod([np.linalg.norm(m, 2) for m in term]))
        return total


def identity_operator(grids: GridSet) -> SeparableOperator:
    return SeparableOperator(grids.shape, ((None,) * grids.d,), ("I",))


def zero_operator(grids: GridSet) -> SeparableOperator:
    return SeparableOperator(
        grids.shape, ((np.zeros((grids[0].n,) * 2),) + (None,) * (grids.d - 1),), ("0",)
    )


def diffusion_operator(grids: GridSet, beta: float, dims=None) -> SeparableOperator:
    """``beta * sum_k d^2/dx_k^2`` over the selected coordinates (all by default)."""
    dims = range(grids.d) if dims is None else dims
    terms = []
    for k in dims:
        term = [None] * grids.d
        term[k] = beta * grids[k].d2
        terms.append(tuple(term))
    return SeparableOperator(grids.shape, tuple(terms))


def build_fp_operator(grids: GridSet, alpha: float, beta: float, kappa: float) -> SeparableOperator:
    """Rank-9 Fokker-Planck operator on a periodic four-dimensional grid.

    Drift ``alpha * (sin x1, sin x3, sin x4, sin x1)`` and diagonal diffusion
    with coefficients ``beta * (1 + kappa sin x_{k+1})`` (cyclically).
    """
    if grids.d != 4:
        raise DimensionError(f"the Fokker-Planck builder needs d = 4, got {grids.d}")
    x = [g.points for g in grids]
    D1 = [g.d1 for g in grids]
    D2 = [g.d2 for g in grids]

    def diag(v):
        return np.diag(v)

    def coeff(k):
        return diag(1.0 + kappa * np.sin(x[k]))

    factor_lists = [
        ({0: diag(-alpha * np.cos(x[0]))}, "-a cos(x1)"),
        ({0: -alpha * diag(np.sin(x[0])) @ D1[0]}, "-a sin(x1) d/dx1"),
        ({1: -alpha * D1[1], 2: diag(np.sin(x[2]))}, "-a sin(x3) d/dx2"),
        ({2: -alpha * D1[2], 3: diag(np.sin(x[3]))}, "-a sin(x4) d/dx3"),
        ({0: diag(-alpha * np.sin(x[0])), 3: D1[3]}, "-a sin(x1) d/dx4"),
        ({0: beta * D2[0], 1: coeff(1)}, "b (1+k sin x2) d2/dx1^2"),
        ({1: beta * D2[1], 2: coeff(2)}, "b (1+k sin x3) d2/dx2^2"),
        ({2: beta * D2[2], 3: coeff(3)}, "b (1+k sin x4) d2/dx3^2"),
        ({3: beta * D2[3], 0: coeff(0)}, "b (1+k sin x1) d2/dx4^2"),
    ]
    terms = tuple(tuple(factors.get(k) for k in range(4)) for factors, _ in factor_lists)
    labels = tuple(label for _, label in factor_lists)
    return SeparableOperator(grids.shape, terms, labels)


def _mode_product(u, mat, axis, kind):
    if kind == _IDENTITY:
        return u
    if kind == _DIAGONAL:
        shape = [1] * u.ndim
        shape[axis] = -1
        return u * np.diag(mat).reshape(shape)
    return np.moveaxis(np.tensordot(mat, u, axes=(1, axis)), 0, axis)


def apply_full(op: SeparableOperator, u) -> np.ndarray:
    """Apply the operator to a dense tensor via successive mode products."""
    u = np.asarray(u, dtype=float)
    if u.shape != op.shape:
        raise DimensionError(f"tensor shape {u.shape} does not match operator {op.shape}")
    out = np.zeros_like(u)
    for term, kinds in zip(op.terms, op._kinds):
        v = u
        for axis, (mat, kind) in enumerate(zip(term, kinds)):
            v = _mode_product(v, mat, axis, kind)
        out += v
    return out


def apply_factor(op: SeparableOperator, term: int, dim: int, core) -> np.ndarray:
    """Apply factor ``L_term^(dim)`` along the grid axis of a core (0-based indices)."""
    mat = op.factor(term, dim)
    core = np.asarray(core, dtype=float)
    if core.ndim != 3 or core.shape[1] != mat.shape[0]:
        raise DimensionError(f"core shape {core.shape} incompatible with factor size {mat.shape[0]}")
    kind = op._kinds[term][dim]
    if kind == _IDENTITY:
        return core
    if kind == _DIAGONAL:
        return core * np.diag(mat)[None, :, None]
    return np.matmul(mat, core)

"""Functional tensor trains sampled at quadrature points.

A train over a :class:`~fttdyn.grid.GridSet` with ``d`` coordinates stores
``d`` cores. Core ``k`` is a real array of shape ``(r_{k-1}, n_k, r_k)``
holding the matrix-valued univariate function ``Psi_k`` at the collocation
points of coordinate ``k``; ``r_0 = r_d = 1``. All inner products are taken
with the quadrature weights of the grids, so "orthonormal" always means
orthonormal in the discrete L^2_mu sense.

Dense tensors on the product grid are plain ``numpy`` arrays of shape
``grids.shape``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt

import numpy as np
import scipy.linalg

from .errors import (
    DataError,
    DimensionError,
    InvertibilityError,
    ParameterError,
    RankDeficiencyError,
)
from .grid import Grid1D, GridSet

DEFAULT_RCOND_CAP = 1e-12
TIE_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class FttTensor:
    """Tensor train with cores ``Psi_1, ..., Psi_d`` on a product grid."""

    cores: tuple
    grids: GridSet = field(repr=False)

    def __post_init__(self):
        cores = tuple(np.asarray(c, dtype=float) for c in self.cores)
        grids = self.grids
        if len(cores) != grids.d:
            raise DimensionError(f"{len(cores)} cores for a {grids.d}-dimensional grid")
        for k, (core, grid) in enumerate(zip(cores, grids)):
            if core.ndim != 3:
                raise DimensionError(f"core {k + 1} must be 3-axis, got shape {core.shape}")
            if core.shape[1] != grid.n:
                raise DimensionError(
                    f"core {k + 1} has {core.shape[1]} grid values, grid has {grid.n}"
                )
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise DimensionError("boundary ranks must be 1")
        for k in range(len(cores) - 1):
            if cores[k].shape[2] != cores[k + 1].shape[0]:
                raise DimensionError(
                    f"rank mismatch between cores {k + 1} and {k + 2}: "
                    f"{cores[k].shape} vs {cores[k + 1].shape}"
                )
        object.__setattr__(self, "cores", cores)

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def ranks(self) -> tuple:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def shape(self) -> tuple:
        return self.grids.shape

    def with_cores(self, cores) -> "FttTensor":
        return FttTensor(tuple(cores), self.grids)

    def evaluate(self) -> np.ndarray:
        return ftt_evaluate(self)

    def norm(self) -> float:
        return ftt_norm(self)

    def mass(self) -> float:
        return ftt_mass(self)


@dataclass(frozen=True)
class SingularSpectrum:
    """Retained singular values per bond, in the weighted (L^2_mu-isometric) norm.

    ``discarded[k]`` is the root-sum-square of the values dropped at bond
    ``k + 1`` and ``threshold`` the per-bond cutoff that was applied.
    """

    values: tuple
    discarded: tuple
    threshold: float

    def min_energy(self) -> float:
        return min(float(v[-1]) for v in self.values) if self.values else 0.0


class GaugeTransform:
    """Invertible bond matrices ``P_1, ..., P_{d-1}`` acting on a train."""

    def __init__(self, matrices, rcond_cap=DEFAULT_RCOND_CAP):
        mats = []
        for i, p in enumerate(matrices):
            p = np.asarray(p, dtype=float)
            if p.ndim != 2 or p.shape[0] != p.shape[1]:
                raise DimensionError(f"gauge matrix {i + 1} must be square, got {p.shape}")
            s = np.linalg.svd(p, compute_uv=False)
            if not np.all(np.isfinite(s)) or s[0] == 0 or s[-1] / s[0] < rcond_cap:
                raise InvertibilityError(f"gauge matrix {i + 1} is singular")
            mats.append(p)
        self.matrices = tuple(mats)

    def __len__(self):
        return len(self.matrices)

    @classmethod
    def identity(cls, ranks):
        return cls([np.eye(r) for r in ranks[1:-1]])


# ---------------------------------------------------------------------------
# weighted unfoldings


def _weighted(core, grid):
    return core * grid.sqrt_weights[None, :, None]


def _unweighted(core, grid):
    return core / grid.sqrt_weights[None, :, None]


def _truncation_rank(s, delta):
    """Smallest rank whose discarded tail is at most ``delta``; ties are kept together."""
    if s.size == 0 or s[0] == 0.0:
        return 1
    tail = np.sqrt(np.cumsum((s * s)[::-1]))[::-1]
    # tail[r] is the error of keeping r values
    ok = np.nonzero(np.append(tail, 0.0) <= delta)[0]
    r = max(int(ok[0]), 1)
    while r < s.size and s[r - 1] - s[r] <= TIE_RTOL * s[r - 1]:
        r += 1
    return r


def _tail(s, r):
    return float(np.sqrt(np.sum(s[r:] ** 2)))


def _zero_train(grids):
    return FttTensor(tuple(np.zeros((1, g.n, 1)) for g in grids), grids)


def grid_scaled_threshold(eps: float, grids: GridSet) -> float:
    """Relative threshold obtained by dividing ``eps`` by the grid-cell volume.

    This is the convention under which thresholds ``1e-8, 1e-5, 1e-3`` on
    the 21-point Fokker-Planck grid give ranks 15, 9 and 5.
    """
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    return float(eps / grids.cell_volume)


# ---------------------------------------------------------------------------
# decomposition / evaluation


def ftt_decompose(u, grids: GridSet, eps: float):
    """Decompose a dense tensor into a left-orthonormal train.

    Sequential truncated SVDs of the quadrature-weighted tensor. At every
    bond the discarded singular values have root-sum-square at most
    ``eps * ||u|| / sqrt(d - 1)``, so the relative L^2_mu error of the
    result is at most ``eps``.

    Returns
    -------
    (FttTensor, SingularSpectrum)
    """
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    u = np.asarray(u, dtype=float)
    if u.shape != grids.shape:
        raise DimensionError(f"tensor shape {u.shape} does not match grid {grids.shape}")
    if not np.all(np.isfinite(u)):
        raise DataError("tensor contains non-finite values")
    d = grids.d
    uw = u * grids.sqrt_weight_tensor()
    norm = float(np.linalg.norm(uw))
    if norm == 0.0:
        return _zero_train(grids), SingularSpectrum(
            tuple(np.zeros(1) for _ in range(d - 1)), tuple(0.0 for _ in range(d - 1)), 0.0
        )
    delta = eps * norm / sqrt(d - 1)
    cores, values, discarded = [], [], []
    rest = uw
    r_prev = 1
    for k in range(d - 1):
        n = grids[k].n
        mat = rest.reshape(r_prev * n, -1)
        U, s, Vt = np.linalg.svd(mat, full_matrices=False)
        r = _truncation_rank(s, delta)
        cores.append(_unweighted(U[:, :r].reshape(r_prev, n, r), grids[k]))
        values.append(s[:r].copy())
        discarded.append(_tail(s, r))
        rest = s[:r, None] * Vt[:r]
        r_prev = r
    last = rest.reshape(r_prev, grids[-1].n, 1)
    cores.append(_unweighted(last, grids[-1]))
    return FttTensor(tuple(cores), grids), SingularSpectrum(
        tuple(values), tuple(discarded), delta
    )


def ftt_evaluate(t: FttTensor) -> np.ndarray:
    """Contract all cores into the dense tensor on the product grid."""
    res = t.cores[0].reshape(-1, t.cores[0].shape[2])
    for core in t.cores[1:]:
        r, n, r2 = core.shape
        res = (res @ core.reshape(r, n * r2)).reshape(-1, r2)
    return res.reshape(t.shape)


def ftt_norm(t: FttTensor) -> float:
    """L^2_mu norm computed in format."""
    W = np.ones((1, 1))
    for core, grid in zip(t.cores, t.grids):
        W = np.einsum("ab,ajc,j,bjd->cd", W, core, grid.weights, core, optimize=True)
    return float(np.sqrt(max(W[0, 0], 0.0)))


def ftt_mass(t: FttTensor) -> float:
    """Integral of the represented function under the product quadrature."""
    M = np.ones((1, 1))
    for core, grid in zip(t.cores, t.grids):
        M = M @ np.einsum("ajb,j->ab", core, grid.weights)
    return float(M[0, 0])


def ftt_inner(s: FttTensor, t: FttTensor) -> float:
    """L^2_mu inner product of two trains on the same grid."""
    W = np.ones((1, 1))
    for a, b, grid in zip(s.cores, t.cores, t.grids):
        W = np.einsum("ab,ajc,j,bjd->cd", W, a, grid.weights, b, optimize=True)
    return float(W[0, 0])


def from_cores(cores, grids: GridSet) -> FttTensor:
    return FttTensor(tuple(cores), grids)


# ---------------------------------------------------------------------------
# correlations and gauges


def autocorrelation(A, B, grid: Grid1D) -> np.ndarray:
    """Matrix ``C[i, j] = sum_k <A(k, ., i), B(k, ., j)>`` in the weighted inner product."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 3 or B.ndim != 3:
        raise DimensionError("cores must be 3-axis arrays")
    if A.shape[0] != B.shape[0] or A.shape[1] != grid.n or B.shape[1] != grid.n:
        raise DimensionError(f"incompatible cores {A.shape} and {B.shape} on grid n={grid.n}")
    return np.einsum("kji,j,kjl->il", A, grid.weights, B, optimize=True)


def _left_orth_factors(cores, grids, rcond_cap=DEFAULT_RCOND_CAP):
    """Left-to-right weighted QR sweep.

    Returns the new cores and the triangular factors ``R_1, ..., R_{d-1}``
    with ``Q_k = R_{k-1} Psi_k R_k^{-1}``.
    """
    d = len(cores)
    out, factors = [], []
    R = np.ones((1, 1))
    for k in range(d - 1):
        core = np.einsum("ab,bjc->ajc", R, cores[k])
        r, n, r2 = core.shape
        mat = _weighted(core, grids[k]).reshape(r * n, r2)
        s = np.linalg.svd(mat, compute_uv=False)
        rcond = 0.0 if r2 > r * n or s[0] == 0 else float((s[-1] / s[0]) ** 2)
        if not rcond >= rcond_cap:
            raise RankDeficiencyError(k + 1, rcond)
        Q, R = np.linalg.qr(mat)
        signs = np.where(np.diag(R) < 0, -1.0, 1.0)
        Q = Q * signs[None, :]
        R = signs[:, None] * R
        out.append(_unweighted(Q.reshape(r, n, r2), grids[k]))
        factors.append(R)
    out.append(np.einsum("ab,bjc->ajc", R, cores[-1]))
    return out, factors


def left_orthogonalize(t: FttTensor, rcond_cap: float = DEFAULT_RCOND_CAP) -> FttTensor:
    """Gauge the train so that cores ``1..d-1`` have identity autocorrelation."""
    cores, _ = _left_orth_factors(t.cores, t.grids, rcond_cap)
    return t.with_cores(cores)


def orthonormality_defect(t: FttTensor) -> float:
    """Largest deviation of a leading autocorrelation matrix from the identity."""
    worst = 0.0
    for core, grid in zip(t.cores[:-1], t.grids):
        C = autocorrelation(core, core, grid)
        worst = max(worst, float(np.abs(C - np.eye(C.shape[0])).max()))
    return worst


def apply_gauge(t: FttTensor, g: GaugeTransform) -> FttTensor:
    """Return the train ``Psi_1 P_1, P_1^{-1} Psi_2 P_2, ..., P_{d-1}^{-1} Psi_d``."""
    if len(g) != t.d - 1:
        raise DimensionError(f"need {t.d - 1} gauge matrices, got {len(g)}")
    ranks = t.ranks
    for i, P in enumerate(g.matrices):
        if P.shape != (ranks[i + 1], ranks[i + 1]):
            raise DimensionError(f"gauge matrix {i + 1} has shape {P.shape}, bond rank {ranks[i + 1]}")
    cores = []
    for k, core in enumerate(t.cores):
        if k > 0:
            P = g.matrices[k - 1]
            r, n, r2 = core.shape
            core = np.linalg.solve(P, core.reshape(r, n * r2)).reshape(r, n, r2)
        if k < t.d - 1:
            core = core @ g.matrices[k]
        cores.append(core)
    return t.with_cores(cores)


def right_grams(t: FttTensor) -> list:
    """Gram matrices of all right interfaces; entry ``k - 1`` belongs to bond ``k``."""
    d = t.d
    grams = [None] * (d - 1)
    G = np.ones((1, 1))
    for k in range(d - 1, 0, -1):
        G = _gram_step(t.cores[k], G, t.grids[k].weights)
        grams[k - 1] = G
    return grams


def _gram_step(core, G, w):
    r, n, r2 = core.shape
    Z = (core.reshape(r * n, r2) @ G).reshape(r, n, r2) * w[None, :, None]
    return Z.reshape(r, -1) @ core.reshape(r, -1).T


def right_gram(t: FttTensor, k: int) -> np.ndarray:
    """Gram matrix of the right interface functions at bond ``k`` (1-based)."""
    if not 1 <= k <= t.d - 1:
        raise ParameterError(f"bond index must be in [1, {t.d - 1}], got {k}")
    G = np.ones((1, 1))
    for j in range(t.d - 1, k - 1, -1):
        G = _gram_step(t.cores[j], G, t.grids[j].weights)
    return G


# ---------------------------------------------------------------------------
# rounding


def _right_orthogonal_cores(cores, grids):
    cores = list(cores)
    for k in range(len(cores) - 1, 0, -1):
        r, n, r2 = cores[k].shape
        mat = _weighted(cores[k], grids[k]).reshape(r, n * r2)
        Q, R = np.linalg.qr(mat.T)
        m = Q.shape[1]
        cores[k] = _unweighted(Q.T.reshape(m, n, r2), grids[k])
        cores[k - 1] = cores[k - 1] @ R.T
    return cores


def _svd_sweep(cores, grids, delta):
    """Left-to-right SVD sweep over right-orthonormal ``cores``; ``delta=None`` keeps everything."""
    values, discarded = [], []
    for k in range(len(cores) - 1):
        r, n, r2 = cores[k].shape
        mat = _weighted(cores[k], grids[k]).reshape(r * n, r2)
        U, s, Vt = np.linalg.svd(mat, full_matrices=False)
        rk = s.size if delta is None else _truncation_rank(s, delta)
        cores[k] = _unweighted(U[:, :rk].reshape(r, n, rk), grids[k])
        nxt = cores[k + 1]
        rn, nn, rn2 = nxt.shape
        cores[k + 1] = ((s[:rk, None] * Vt[:rk]) @ nxt.reshape(rn, nn * rn2)).reshape(rk, nn, rn2)
        values.append(s[:rk].copy())
        discarded.append(_tail(s, rk))
    return cores, values, discarded


def tt_round(t: FttTensor, eps: float):
    """Recompress a train to relative L^2_mu accuracy ``eps``.

    Right-to-left orthogonalization followed by a left-to-right truncated
    SVD sweep. The result is left-orthonormal and its ranks never exceed
    the input ranks.
    """
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    grids = t.grids
    d = t.d
    cores = _right_orthogonal_cores(t.cores, grids)
    norm = float(np.linalg.norm(_weighted(cores[0], grids[0])))
    if norm == 0.0:
        return _zero_train(grids), SingularSpectrum(
            tuple(np.zeros(1) for _ in range(d - 1)), tuple(0.0 for _ in range(d - 1)), 0.0
        )
    delta = eps * norm / sqrt(d - 1)
    cores, values, discarded = _svd_sweep(cores, grids, delta)
    return t.with_cores(cores), SingularSpectrum(tuple(values), tuple(discarded), delta)


def mode_energies(t: FttTensor) -> list:
    """Singular values at every bond of the train (no truncation)."""
    cores = _right_orthogonal_cores(t.cores, t.grids)
    _, values, _ = _svd_sweep(cores, t.grids, None)
    return values


def solve_triangular_left(R, core):
    """Return ``R^{-1} core`` acting on the left rank index."""
    r, n, r2 = core.shape
    return scipy.linalg.solve_triangular(R, core.reshape(r, n * r2)).reshape(r, n, r2)

"""Dynamically orthogonal propagation of tensor trains.

The core velocities returned by :func:`dofft_rhs` are the unique velocities
that keep cores ``1..d-1`` orthonormal (DO gauge) and whose assembled
tangent vector is the L^2_mu-orthogonal projection of ``N(u)`` onto the
tangent space of the fixed-rank manifold at ``u``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    IllConditionedGramError,
    ParameterError,
    RankDeficiencyError,
    SolverAbort,
    StateError,
)
from .ftt import (
    DEFAULT_RCOND_CAP,
    FttTensor,
    _left_orth_factors,
    ftt_evaluate,
    ftt_mass,
    ftt_norm,
    mode_energies,
    orthonormality_defect,
    right_grams,
    solve_triangular_left,
    tt_round,
)
from .operators import SeparableOperator, apply_factor

log = logging.getLogger(__name__)

ORTHONORMALITY_TOL = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-3
    t_final: float = 1.0
    eps: float = 1e-3
    rcond_cap: float = DEFAULT_RCOND_CAP
    reorthonormalize_every: int = 1
    energy_check_every: int = 10
    residual_every: int = 0
    snapshot_times: tuple = ()

    def __post_init__(self):
        for name in ("dt", "eps", "rcond_cap"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if not self.t_final >= 0:
            raise ParameterError("t_final must be non-negative")
        if self.t_final > 0 and self.dt > self.t_final:
            raise ParameterError("dt must not exceed t_final")
        for name in ("reorthonormalize_every", "energy_check_every"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be a positive integer")
        if self.residual_every < 0:
            raise ParameterError("residual_every must be non-negative")
        times = tuple(sorted(float(t) for t in self.snapshot_times))
        if any(t < 0 or t > self.t_final + 1e-12 for t in times):
            raise ParameterError("snapshot times must lie in [0, t_final]")
        object.__setattr__(self, "snapshot_times", times)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def snapshot_steps(self) -> dict:
        """Map step index -> requested snapshot time."""
        return {int(round(t / self.dt)): t for t in self.snapshot_times}


@dataclass
class CoreVelocities:
    """Time derivatives of the cores, plus the conditioning of the Gram matrices used."""

    cores: list
    gram_rcond: list = field(default_factory=list)

    def __len__(self):
        return len(self.cores)

    @property
    def min_gram_rcond(self):
        return min(self.gram_rcond) if self.gram_rcond else None


def _left_contract(P, A, Q, w):
    """``sum_{a,c,j} P[a,j,b] A[a,c] Q[c,j,e] w_j``."""
    r, n, r2 = P.shape
    Z = (A.T @ P.reshape(r, n * r2)).reshape(-1, n, r2) * w[None, :, None]
    return Z.reshape(-1, r2).T @ Q.reshape(-1, Q.shape[2])


def _right_contract(Q, B, P, w):
    """``sum_{b,c,j} Q[a,j,b] B[b,c] P[e,j,c] w_j``."""
    r, n, r2 = Q.shape
    Z = (Q.reshape(r * n, r2) @ B).reshape(r, n, -1) * w[None, :, None]
    return Z.reshape(r, -1) @ P.reshape(P.shape[0], -1).T


def _gram_inverse_apply(X, G, bond, rcond_cap, pinv):
    """Return ``X G^{-1}`` acting on the right rank index of ``X``."""
    evals = np.linalg.eigvalsh(G)
    lam_max = float(evals[-1])
    rcond = float(evals[0] / lam_max) if lam_max > 0 else 0.0
    r, n, r2 = X.shape
    flat = X.reshape(r * n, r2)
    if rcond < rcond_cap:
        if not pinv:
            raise IllConditionedGramError(bond, rcond)
        Ginv = scipy.linalg.pinvh(G, atol=1e-12 * max(lam_max, 0.0))
        return (flat @ Ginv).reshape(r, n, r2), rcond
    cho = scipy.linalg.cho_factor(G)
    return scipy.linalg.cho_solve(cho, flat.T).T.reshape(r, n, r2), rcond


def dofft_rhs(
    t: FttTensor,
    op: SeparableOperator,
    rcond_cap: float = DEFAULT_RCOND_CAP,
    *,
    pinv: bool = False,
    check: bool = True,
) -> CoreVelocities:
    """Core velocities of the DO-FTT system for a separable operator.

    For each term ``i`` the left interface matrices
    ``A_k = <Psi_k^T A_{k-1} (L_i^(k) Psi_k)>_k`` (``A_0 = 1``) and the
    right operator-weighted matrices ``B_k`` (``B_d = 1``) are built once;
    then for ``k < d``

        dPsi_k/dt = [sum_i A_{k-1} (L_i^(k) Psi_k) B_k - Psi_k sum_i A_k B_k] G_k^{-1}

    with ``G_k`` the Gram matrix of the right interface, and
    ``dPsi_d/dt = sum_i A_{d-1} (L_i^(d) Psi_d)``.
    """
    if op.shape != t.shape:
        raise ParameterError(f"operator shape {op.shape} does not match train {t.shape}")
    if check:
        defect = orthonormality_defect(t)
        if defect > ORTHONORMALITY_TOL:
            raise StateError(f"cores are not left-orthonormal (defect {defect:.2e})")
    d = t.d
    cores = t.cores
    weights = [g.weights for g in t.grids]

    X = [np.zeros_like(c) for c in cores]
    M = [np.zeros((c.shape[2], c.shape[2])) for c in cores[:-1]]
    for i in range(op.rank):
        L_cores = [apply_factor(op, i, k, cores[k]) for k in range(d)]
        A = [np.ones((1, 1))]
        for k in range(d - 1):
            A.append(_left_contract(cores[k], A[k], L_cores[k], weights[k]))
        B = [None] * d
        B[d - 1] = np.ones((1, 1))
        for k in range(d - 1, 0, -1):
            B[k - 1] = _right_contract(L_cores[k], B[k], cores[k], weights[k])
        for k in range(d):
            r, n, r2 = L_cores[k].shape
            Z = (A[k] @ L_cores[k].reshape(r, n * r2)).reshape(-1, r2) @ B[k]
            X[k] += Z.reshape(X[k].shape)
            if k < d - 1:
                M[k] += A[k + 1] @ B[k]

    grams = right_grams(t)
    velocities, rconds = [], []
    for k in range(d - 1):
        core = cores[k]
        r, n, r2 = core.shape
        Y = X[k] - (core.reshape(r * n, r2) @ M[k]).reshape(r, n, r2)
        V, rcond = _gram_inverse_apply(Y, grams[k], k + 1, rcond_cap, pinv)
        # exact V already satisfies <V, Psi_k> = 0; this strips roundoff that
        # G^{-1} amplifies when the right Gram is poorly conditioned
        C = _left_contract(core, np.eye(r), V, weights[k])
        V = V - (core.reshape(r * n, r2) @ C).reshape(r, n, r2)
        velocities.append(V)
        rconds.append(rcond)
    velocities.append(X[d - 1])
    return CoreVelocities(velocities, rconds)


def tangent_train(t: FttTensor, v) -> FttTensor:
    """Tangent vector ``sum_k Psi_1 .. dPsi_k .. Psi_d`` as a train of doubled rank."""
    vs = v.cores if isinstance(v, CoreVelocities) else list(v)
    if len(vs) != t.d or any(np.shape(a) != c.shape for a, c in zip(vs, t.cores)):
        raise ParameterError("velocities do not match the train's core shapes")
    d = t.d
    cores = []
    for k, (P, V) in enumerate(zip(t.cores, vs)):
        r, n, r2 = P.shape
        if k == 0:
            cores.append(np.concatenate([P, V], axis=2))
        elif k == d - 1:
            cores.append(np.concatenate([V, P], axis=0))
        else:
            blk = np.zeros((2 * r, n, 2 * r2))
            blk[:r, :, :r2] = P
            blk[:r, :, r2:] = V
            blk[r:, :, r2:] = P
            cores.append(blk)
    return t.with_cores(cores)


def tangent_vector(t: FttTensor, v) -> np.ndarray:
    """Dense tangent vector for the core velocities ``v``."""
    return ftt_evaluate(tangent_train(t, v))


def _rhs_in_gauge(cores, grids, op, rcond_cap, pinv):
    """DO velocities computed at the orthonormalized state, expressed in the gauge of ``cores``."""
    orth, R = _left_orth_factors(cores, grids)
    vel = dofft_rhs(FttTensor(tuple(orth), grids), op, rcond_cap, pinv=pinv, check=False)
    d = len(cores)
    out = []
    for k, V in enumerate(vel.cores):
        if k > 0:
            V = solve_triangular_left(R[k - 1], V)
        if k < d - 1:
            V = V @ R[k]
        out.append(V)
    return out, vel.min_gram_rcond


def rk4_step(
    t: FttTensor,
    op: SeparableOperator,
    dt: float,
    cfg: SolverConfig | None = None,
    *,
    reorthonormalize: bool = True,
    pinv: bool = False,
):
    """One classical Runge-Kutta step of the core ODE system.

    Each stage state is orthonormalized before the right-hand side is
    evaluated and the resulting velocities are mapped back to the stage's
    own gauge, so the four stages combine consistently.

    Returns the new train and the smallest Gram reciprocal condition number
    seen in the four stages.
    """
    rcond_cap = cfg.rcond_cap if cfg is not None else DEFAULT_RCOND_CAP
    grids = t.grids
    y = t.cores
    try:
        k1, rc1 = _rhs_in_gauge(y, grids, op, rcond_cap, pinv)
        k2, rc2 = _rhs_in_gauge([a + 0.5 * dt * b for a, b in zip(y, k1)], grids, op, rcond_cap, pinv)
        k3, rc3 = _rhs_in_gauge([a + 0.5 * dt * b for a, b in zip(y, k2)], grids, op, rcond_cap, pinv)
        k4, rc4 = _rhs_in_gauge([a + dt * b for a, b in zip(y, k3)], grids, op, rcond_cap, pinv)
    except RankDeficiencyError as exc:
        raise IllConditionedGramError(exc.bond, exc.rcond) from exc
    new = [
        a + (dt / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
    ]
    if reorthonormalize:
        new, _ = _left_orth_factors(new, grids)
    rconds = [rc for rc in (rc1, rc2, rc3, rc4) if rc is not None]
    return FttTensor(tuple(new), grids), (min(rconds) if rconds else None)


def _min_mode_energy(t):
    """Smallest singular value over all bonds, relative to the norm of the train."""
    norm = ftt_norm(t)
    if norm == 0.0:
        return 0.0
    return min(float(s[-1]) for s in mode_energies(t)) / norm


def _maybe_round(t, eps):
    """Round at ``eps`` when some mode energy is below ``eps`` and the rounding removes modes."""
    energy = _min_mode_energy(t)
    if energy >= eps:
        return t, energy
    rounded, _ = tt_round(t, eps)
    if not any(a < b for a, b in zip(rounded.ranks, t.ranks)):
        return t, energy
    return rounded, _min_mode_energy(rounded)


def solve_dofft(t0: FttTensor, op: SeparableOperator, cfg: SolverConfig, sink=None) -> FttTensor:
    """Integrate the DO-FTT system from ``t0`` to ``cfg.t_final``.

    Ranks only decrease: every ``energy_check_every`` steps the train is
    re-truncated at threshold ``cfg.eps`` whenever the smallest relative
    singular value at some bond falls below ``eps`` and the truncation
    actually removes modes. An ill-conditioned Gram matrix forces a
    truncation and a single retry of the step.
    """
    from .diagnostics import DiagnosticsRecord, tangent_residual

    defect = orthonormality_defect(t0)
    if defect > ORTHONORMALITY_TOL:
        raise StateError(f"initial train is not left-orthonormal (defect {defect:.2e})")
    state = t0
    n_steps = cfg.n_steps
    snaps = cfg.snapshot_steps()
    min_energy = _min_mode_energy(state)

    def emit(step, rcond):
        if sink is None:
            return
        residual = None
        if cfg.residual_every and step % cfg.residual_every == 0:
            residual = tangent_residual(state, op, cfg.rcond_cap)
        sink.record(
            DiagnosticsRecord(
                step=step,
                t=step * cfg.dt,
                ranks=state.ranks,
                mass=ftt_mass(state),
                tangent_residual=residual,
                min_mode_energy=min_energy,
                min_gram_rcond=rcond,
            )
        )
        if step in snaps and hasattr(sink, "snapshot"):
            sink.snapshot(step, step * cfg.dt, state)

    emit(0, None)
    for step in range(1, n_steps + 1):
        reorth = step % cfg.reorthonormalize_every == 0 or step == n_steps
        try:
            new, rcond = rk4_step(state, op, cfg.dt, cfg, reorthonormalize=reorth)
        except IllConditionedGramError as exc:
            log.info("step %d: %s; forcing truncation", step, exc)
            state, _ = tt_round(state, cfg.eps)
            try:
                new, rcond = rk4_step(state, op, cfg.dt, cfg, reorthonormalize=reorth, pinv=True)
            except IllConditionedGramError as exc2:
                raise SolverAbort(step, str(exc2)) from exc2
        if not all(np.all(np.isfinite(c)) for c in new.cores):
            raise SolverAbort(step, "non-finite cores")
        state = new
        if step % cfg.energy_check_every == 0:
            rounded, min_energy = _maybe_round(state, cfg.eps)
            if rounded is not state:
                log.info("step %d: ranks %s -> %s", step, state.ranks, rounded.ranks)
                state = rounded
        emit(step, rcond)
    return state

"""Full tensor-product-grid benchmark: classical RK4 on ``du/dt = N u``."""
from __future__ import annotations

import logging
import warnings

import numpy as np

from .diagnostics import DiagnosticsRecord, total_mass, weighted_norm
from .dynamics import SolverConfig
from .errors import DimensionError, SolverAbort
from .grid import GridSet
from .operators import SeparableOperator, apply_full

log = logging.getLogger(__name__)

# RK4 stability interval on the negative real axis is about 2.785
RK4_STABILITY = 2.78


def rk4_full_step(u, op, dt):
    k1 = apply_full(op, u)
    k2 = apply_full(op, u + 0.5 * dt * k1)
    k3 = apply_full(op, u + 0.5 * dt * k2)
    k4 = apply_full(op, u + dt * k3)
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def solve_full(p0, grids: GridSet, op: SeparableOperator, cfg: SolverConfig, sink=None) -> np.ndarray:
    """Integrate the semi-discrete system on the full grid."""
    u = np.array(p0, dtype=float)
    if u.shape != op.shape or u.shape != grids.shape:
        raise DimensionError(f"initial state {u.shape} vs operator {op.shape} / grid {grids.shape}")
    bound = op.norm_bound()
    if cfg.dt * bound > RK4_STABILITY:
        warnings.warn(
            f"dt = {cfg.dt} may violate the RK4 stability bound (dt * |N| = {cfg.dt * bound:.3g})",
            RuntimeWarning,
            stacklevel=2,
        )
    snaps = cfg.snapshot_steps()
    # a dense tensor has the maximal TT ranks of its unfoldings
    full_ranks = tuple(
        min(int(np.prod(grids.shape[:k])), int(np.prod(grids.shape[k:]))) for k in range(grids.d + 1)
    )

    def emit(step):
        if sink is None:
            return
        sink.record(
            DiagnosticsRecord(step=step, t=step * cfg.dt, ranks=full_ranks, mass=total_mass(u, grids))
        )
        if step in snaps and hasattr(sink, "snapshot"):
            sink.snapshot(step, step * cfg.dt, u)

    emit(0)
    for step in range(1, cfg.n_steps + 1):
        u = rk4_full_step(u, op, cfg.dt)
        if not np.all(np.isfinite(u)):
            raise SolverAbort(step, "non-finite state")
        emit(step)
    log.debug("full solve finished, norm %.6g", weighted_norm(u, grids))
    return u

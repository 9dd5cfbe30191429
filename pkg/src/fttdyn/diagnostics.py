"""Error norms, marginals, mass and per-step diagnostic records."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError
from .grid import GridSet

CSV_FLOAT = "{:.17g}"


@dataclass(frozen=True)
class DiagnosticsRecord:
    step: int
    t: float
    ranks: tuple
    mass: float
    l2_error: float | None = None
    tangent_residual: float | None = None
    min_mode_energy: float | None = None
    min_gram_rcond: float | None = None


def _check_shape(a, grids):
    if a.shape != grids.shape:
        raise DimensionError(f"tensor shape {a.shape} does not match grid {grids.shape}")


def weighted_norm(a, grids: GridSet) -> float:
    a = np.asarray(a, dtype=float)
    _check_shape(a, grids)
    return float(np.sqrt(np.sum(grids.weight_tensor() * a * a)))


def l2_error(a, b, grids: GridSet) -> float:
    """Discrete L^2_mu distance between two dense tensors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return weighted_norm(a - b, grids)


def total_mass(p, grids: GridSet) -> float:
    p = np.asarray(p, dtype=float)
    _check_shape(p, grids)
    return float(np.sum(grids.weight_tensor() * p))


def marginal_2d(p, grids: GridSet, keep) -> np.ndarray:
    """Integrate out every coordinate except the two in ``keep`` (0-based, in that order)."""
    p = np.asarray(p, dtype=float)
    _check_shape(p, grids)
    i, j = (int(k) for k in keep)
    if i == j or not (0 <= i < grids.d and 0 <= j < grids.d):
        raise ParameterError(f"invalid marginal indices {keep} for d = {grids.d}")
    out = p
    for k in reversed(range(grids.d)):
        if k in (i, j):
            continue
        out = np.tensordot(out, grids[k].weights, axes=([k], [0]))
    return out if i < j else out.T


def tangent_components(t, op, rcond_cap=None):
    """Return ``(N(u), v_TT)`` as dense tensors for a train ``t``."""
    from .dynamics import dofft_rhs, tangent_vector
    from .ftt import DEFAULT_RCOND_CAP, left_orthogonalize, orthonormality_defect
    from .operators import apply_full

    rcond_cap = DEFAULT_RCOND_CAP if rcond_cap is None else rcond_cap
    if orthonormality_defect(t) > 1e-12:
        t = left_orthogonalize(t)
    v = dofft_rhs(t, op, rcond_cap)
    return apply_full(op, t.evaluate()), tangent_vector(t, v)


def tangent_residual(t, op, rcond_cap=None) -> float:
    """Norm of the component of ``N(u)`` normal to the manifold at ``u``."""
    Nu, v = tangent_components(t, op, rcond_cap)
    return l2_error(v, Nu, t.grids)


# ---------------------------------------------------------------------------
# sinks


@dataclass
class MemorySink:
    """Keeps records and snapshots in lists."""

    records: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)

    def record(self, rec: DiagnosticsRecord):
        if self.records and rec.t < self.records[-1].t:
            raise ParameterError("diagnostics times must be non-decreasing")
        self.records.append(rec)

    def snapshot(self, step, t, state):
        self.snapshots[step] = (t, state)


def csv_header(d: int) -> list:
    return (
        ["step", "t"]
        + [f"r{k}" for k in range(1, d)]
        + ["l2_error", "tangent_residual", "mass", "min_mode_energy", "min_gram_rcond"]
    )


def _fmt(x):
    return "" if x is None else CSV_FLOAT.format(x)


def csv_row(rec: DiagnosticsRecord) -> list:
    return (
        [str(rec.step), _fmt(rec.t)]
        + [str(r) for r in rec.ranks[1:-1]]
        + [
            _fmt(rec.l2_error),
            _fmt(rec.tangent_residual),
            _fmt(rec.mass),
            _fmt(rec.min_mode_energy),
            _fmt(rec.min_gram_rcond),
        ]
    )


def write_csv(path, records, d: int):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(d))
        for rec in records:
            writer.writerow(csv_row(rec))


def read_csv(path) -> list:
    """Parse a diagnostics CSV back into records."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    rank_cols = [h for h in header if h.startswith("r") and h[1:].isdigit()]
    out = []
    for row in body:
        rec = dict(zip(header, row))

        def val(key):
            return float(rec[key]) if rec.get(key, "") != "" else None

        out.append(
            DiagnosticsRecord(
                step=int(rec["step"]),
                t=float(rec["t"]),
                ranks=(1,) + tuple(int(rec[c]) for c in rank_cols) + (1,),
                mass=float(rec["mass"]),
                l2_error=val("l2_error"),
                tangent_residual=val("tangent_residual"),
                min_mode_energy=val("min_mode_energy"),
                min_gram_rcond=val("min_gram_rcond"),
            )
        )
    return out


def write_matrix_csv(path, mat):
    mat = np.asarray(mat, dtype=float)
    with open(path, "w", newline="") as fh:
        for row in mat:
            fh.write(",".join(CSV_FLOAT.format(x) for x in row) + "\n")

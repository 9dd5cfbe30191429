"""Dynamic low-rank approximation of PDEs on functional tensor-train manifolds."""

from .ftt import (
    FttTensor,
    GaugeTransform,
    SingularSpectrum,
    apply_gauge,
    autocorrelation,
    ftt_decompose,
    ftt_evaluate,
    grid_scaled_threshold,
    left_orthogonalize,
    right_gram,
    tt_round,
)
from .grid import Grid1D, GridSet, fourier_grid, quad_inner
from .operators import SeparableOperator, apply_factor, apply_full, build_fp_operator
from .dynamics import CoreVelocities, SolverConfig, dofft_rhs, rk4_step, solve_dofft, tangent_vector
from .reference import solve_full
from .diagnostics import DiagnosticsRecord, l2_error, marginal_2d, tangent_residual, total_mass

__version__ = "0.1.0"

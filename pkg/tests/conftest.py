import numpy as np
import pytest

from fttdyn.ftt import FttTensor, left_orthogonalize
from fttdyn.grid import GridSet, fourier_grid, uniform_gridset


@pytest.fixture
def rng():
    return np.random.default_rng(20201016)


def random_train(rng, grids, ranks, orthonormal=True):
    cores = [
        rng.standard_normal((ranks[k], g.n, ranks[k + 1])) for k, g in enumerate(grids)
    ]
    t = FttTensor(tuple(cores), grids)
    return left_orthogonalize(t) if orthonormal else t


def random_grids(rng, d, n_max=8):
    dims = []
    for _ in range(d):
        n = int(rng.integers(4, n_max + 1))
        a = float(rng.uniform(-1.0, 1.0))
        dims.append(fourier_grid(n, a, a + float(rng.uniform(1.0, 7.0))))
    return GridSet(tuple(dims))


@pytest.fixture(scope="session")
def fp_grids():
    return uniform_gridset(21, 4)


@pytest.fixture(scope="session")
def p0(fp_grids):
    from fttdyn.config import RunConfig, build_initial_pdf

    return build_initial_pdf(RunConfig(), fp_grids)


# every dofft_rhs call made anywhere in the test session is checked against
# the DO constraint; the acceptance suite reports the tally
DO_CHECK = {"calls": 0, "worst": 0.0}
DO_TOL = 1e-10


def do_violation(t, velocities):
    from fttdyn.ftt import autocorrelation

    worst = 0.0
    for k in range(t.d - 1):
        V = velocities.cores[k]
        C = autocorrelation(V, t.cores[k], t.grids[k])
        scale = 1.0 + np.sqrt(np.sum(t.grids[k].weights[None, :, None] * V**2))
        worst = max(worst, float(np.abs(C).max()) / scale)
    return worst


@pytest.fixture(scope="session", autouse=True)
def _check_do_constraint():
    import fttdyn.dynamics as dyn

    original = dyn.dofft_rhs

    def checked(t, *args, **kwargs):
        out = original(t, *args, **kwargs)
        worst = do_violation(t, out)
        DO_CHECK["calls"] += 1
        DO_CHECK["worst"] = max(DO_CHECK["worst"], worst)
        assert worst <= DO_TOL, f"DO constraint violated: {worst:.3e}"
        return out

    mp = pytest.MonkeyPatch()
    mp.setattr(dyn, "dofft_rhs", checked)
    yield DO_CHECK
    mp.undo()


def tangent_basis(t):
    """Columns spanning the tangent space at ``t``, one per gauge-admissible core perturbation.

    Cores ``1..d-1`` are perturbed only in directions orthogonal (weighted) to
    their own columns; the last core is perturbed freely.
    """
    import scipy.linalg

    from fttdyn.dynamics import tangent_vector

    cols = []
    zeros = [np.zeros_like(c) for c in t.cores]
    for k, core in enumerate(t.cores):
        r, n, r2 = core.shape
        sw = np.sqrt(t.grids[k].weights)[None, :, None]
        if k < t.d - 1:
            Q = (core * sw).reshape(r * n, r2)
            comp = scipy.linalg.null_space(Q.T)
            dirs = [
                (comp[:, a].reshape(r, n, 1) / sw) * np.eye(r2)[b][None, None, :]
                for a in range(comp.shape[1])
                for b in range(r2)
            ]
        else:
            dirs = [np.eye(r * n * r2)[i].reshape(r, n, r2) for i in range(r * n * r2)]
        for delta in dirs:
            v = list(zeros)
            v[k] = delta
            cols.append(tangent_vector(t, v).ravel())
    return np.stack(cols, axis=1)


def weighted_projection(basis, f, grids):
    """L^2_mu-orthogonal projection of dense ``f`` onto the column span of ``basis``."""
    s = np.sqrt(grids.weight_tensor()).ravel()
    coef, *_ = np.linalg.lstsq(basis * s[:, None], f.ravel() * s, rcond=1e-13)
    return (basis @ coef).reshape(f.shape)


def random_operator(rng, grids, n_terms):
    from fttdyn.operators import SeparableOperator

    terms = []
    for _ in range(n_terms):
        term = []
        for g in grids:
            kind = rng.integers(3)
            if kind == 0:
                term.append(None)
            elif kind == 1:
                term.append(np.diag(rng.standard_normal(g.n)))
            else:
                term.append(rng.standard_normal((g.n, g.n)))
        terms.append(tuple(term))
    return SeparableOperator(grids.shape, tuple(terms))


def random_valid_ranks(rng, grids, r_max=3):
    """Ranks no larger than either side's unfolding dimension, so right Grams are invertible."""
    d = grids.d
    ranks = [1]
    for k in range(1, d):
        left = ranks[-1] * grids[k - 1].n
        right = int(np.prod([g.n for g in grids.dims[k:]]))
        ranks.append(int(rng.integers(1, min(r_max, left, right) + 1)))
    return ranks + [1]


# acceptance verdicts, printed as one line per criterion at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")

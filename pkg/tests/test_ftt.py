import itertools

import numpy as np
import pytest

from fttdyn.errors import (
    DataError,
    DimensionError,
    InvertibilityError,
    ParameterError,
    RankDeficiencyError,
)
from fttdyn.ftt import (
    FttTensor,
    GaugeTransform,
    apply_gauge,
    autocorrelation,
    ftt_decompose,
    ftt_evaluate,
    ftt_mass,
    ftt_norm,
    grid_scaled_threshold,
    left_orthogonalize,
    mode_energies,
    orthonormality_defect,
    right_gram,
    tt_round,
)
from fttdyn.grid import GridSet, fourier_grid, uniform_gridset

from conftest import random_grids, random_train


def wnorm(u, grids):
    return np.sqrt(np.sum(grids.weight_tensor() * u * u))


def rel_err(a, b, grids):
    return wnorm(a - b, grids) / wnorm(b, grids)


def brute_evaluate(t):
    """Entry-by-entry product of core slices."""
    out = np.empty(t.shape)
    for idx in itertools.product(*(range(n) for n in t.shape)):
        m = np.ones((1, 1))
        for core, j in zip(t.cores, idx):
            m = m @ core[:, j, :]
        out[idx] = m[0, 0]
    return out


def test_separable_function_is_rank_one():
    g = uniform_gridset(21, 2)
    x1, x2 = g.meshgrid()
    t, _ = ftt_decompose(np.sin(x1) * np.cos(x2), g, 1e-10)
    assert t.ranks == (1, 1, 1)


def test_sin_of_sum_is_rank_two():
    g = uniform_gridset(21, 2)
    x1, x2 = g.meshgrid()
    u = np.sin(x1 + x2)
    # oracle: number of non-negligible singular values of the plain matricization
    s = np.linalg.svd(u, compute_uv=False)
    assert np.sum(s > 1e-10 * s[0]) == 2
    t, _ = ftt_decompose(u, g, 1e-10)
    assert t.ranks == (1, 2, 1)


@pytest.mark.parametrize("eps,ranks", [(1e-8, (1, 15, 15, 15, 1)), (1e-5, (1, 9, 9, 9, 1)), (1e-3, (1, 5, 5, 5, 1))])
def test_initial_pdf_ranks(p0, fp_grids, eps, ranks):
    t, spectrum = ftt_decompose(p0, fp_grids, grid_scaled_threshold(eps, fp_grids))
    assert t.ranks == ranks


def test_round_trip_random_low_rank(rng):
    g = random_grids(rng, 4)
    src = random_train(rng, g, (1, 2, 3, 2, 1), orthonormal=False)
    u = ftt_evaluate(src)
    t, spectrum = ftt_decompose(u, g, 1e-10)
    assert rel_err(ftt_evaluate(t), u, g) <= 1e-10
    assert t.ranks[1:-1] <= (2, 3, 2)


@pytest.mark.parametrize("eps", [1e-1, 1e-3, 1e-6])
def test_round_trip_error_bound_random_tensor(rng, eps):
    g = random_grids(rng, 3, n_max=7)
    u = rng.standard_normal(g.shape)
    t, spectrum = ftt_decompose(u, g, eps)
    assert wnorm(ftt_evaluate(t) - u, g) <= eps * wnorm(u, g) * (1 + 1e-12)
    for vals, tail in zip(spectrum.values, spectrum.discarded):
        assert np.all(vals >= 0)
        assert np.all(np.diff(vals) <= 0)
        assert tail <= spectrum.threshold * (1 + 1e-12)


def test_decompose_errors(fp_grids):
    with pytest.raises(ParameterError):
        ftt_decompose(np.ones(fp_grids.shape), fp_grids, 0.0)
    bad = np.ones(fp_grids.shape)
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(DataError):
        ftt_decompose(bad, fp_grids, 1e-3)
    with pytest.raises(DimensionError):
        ftt_decompose(np.ones((3, 3)), fp_grids, 1e-3)


def test_zero_tensor_gives_rank_one_zero_train():
    g = uniform_gridset(5, 3)
    t, _ = ftt_decompose(np.zeros(g.shape), g, 1e-6)
    assert t.ranks == (1, 1, 1, 1)
    assert np.all(ftt_evaluate(t) == 0)


def test_evaluate_rank_one_outer_product(rng):
    g = GridSet((fourier_grid(4, 0, 1), fourier_grid(5, 0, 1)))
    f, h = rng.standard_normal(4), rng.standard_normal(5)
    t = FttTensor((f.reshape(1, 4, 1), h.reshape(1, 5, 1)), g)
    np.testing.assert_array_equal(ftt_evaluate(t), np.outer(f, h))


def test_evaluate_counts_paths():
    g = uniform_gridset(2, 3)
    t = FttTensor((np.ones((1, 2, 2)), np.ones((2, 2, 1)), np.ones((1, 2, 1))), g)
    assert np.all(ftt_evaluate(t) == 2)


def test_evaluate_matches_brute_force(rng):
    g = random_grids(rng, 3, n_max=5)
    t = random_train(rng, g, (1, 3, 2, 1), orthonormal=False)
    np.testing.assert_allclose(ftt_evaluate(t), brute_evaluate(t), rtol=1e-13, atol=1e-13)


def test_invalid_train_shapes():
    g = uniform_gridset(3, 2)
    with pytest.raises(DimensionError):
        FttTensor((np.ones((1, 3, 2)), np.ones((3, 3, 1))), g)
    with pytest.raises(DimensionError):
        FttTensor((np.ones((2, 3, 1)), np.ones((1, 3, 1))), g)
    with pytest.raises(DimensionError):
        FttTensor((np.ones((1, 4, 1)), np.ones((1, 3, 1))), g)


def test_autocorrelation_matches_double_loop(rng):
    grid = fourier_grid(4, 0.3, 2.0)
    A = rng.standard_normal((2, 4, 3))
    B = rng.standard_normal((2, 4, 3))
    C = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            for k in range(2):
                for x in range(4):
                    C[i, j] += grid.weights[x] * A[k, x, i] * B[k, x, j]
    np.testing.assert_allclose(autocorrelation(A, B, grid), C, rtol=1e-14, atol=1e-14)


def test_autocorrelation_bilinear_and_identity(rng):
    g = random_grids(rng, 3)
    t = random_train(rng, g, (1, 3, 2, 1))
    core, grid = t.cores[0], g[0]
    np.testing.assert_allclose(autocorrelation(core, core, grid), np.eye(3), atol=1e-12)
    C = autocorrelation(t.cores[1], t.cores[1], g[1])
    np.testing.assert_allclose(autocorrelation(t.cores[1], 3.5 * t.cores[1], g[1]), 3.5 * C, rtol=1e-14, atol=1e-14)
    with pytest.raises(DimensionError):
        autocorrelation(t.cores[0], t.cores[1], grid)


def test_left_orthogonalize_properties(rng):
    g = random_grids(rng, 4)
    t = random_train(rng, g, (1, 2, 3, 2, 1), orthonormal=False)
    o = left_orthogonalize(t)
    assert orthonormality_defect(o) <= 1e-12
    assert rel_err(ftt_evaluate(o), ftt_evaluate(t), g) <= 1e-12
    # idempotent on an already orthonormal train
    oo = left_orthogonalize(o)
    assert orthonormality_defect(oo) <= 1e-12
    assert rel_err(ftt_evaluate(oo), ftt_evaluate(o), g) <= 1e-12


def test_left_orthogonalize_scaled_core(rng):
    g = random_grids(rng, 3)
    t = random_train(rng, g, (1, 2, 2, 1))
    scaled = t.with_cores((5.0 * t.cores[0],) + t.cores[1:])
    o = left_orthogonalize(scaled)
    np.testing.assert_allclose(autocorrelation(o.cores[0], o.cores[0], g[0]), np.eye(2), atol=1e-12)
    assert rel_err(ftt_evaluate(o), 5.0 * ftt_evaluate(t), g) <= 1e-12


def test_left_orthogonalize_undoes_gauge(rng):
    g = random_grids(rng, 4)
    t = random_train(rng, g, (1, 3, 2, 3, 1))
    P = GaugeTransform([np.eye(r) + 0.3 * rng.standard_normal((r, r)) for r in t.ranks[1:-1]])
    o = left_orthogonalize(apply_gauge(t, P))
    assert rel_err(ftt_evaluate(o), ftt_evaluate(t), g) <= 1e-12


def test_left_orthogonalize_rank_deficient():
    g = uniform_gridset(4, 3)
    core = np.zeros((1, 4, 2))
    core[0, :, 0] = core[0, :, 1] = 1.0  # two identical columns
    t = FttTensor((core, np.ones((2, 4, 1)), np.ones((1, 4, 1))), g)
    with pytest.raises(RankDeficiencyError) as info:
        left_orthogonalize(t)
    assert info.value.bond == 1


def test_gauge_identity_and_scalar(rng):
    g = random_grids(rng, 3)
    t = random_train(rng, g, (1, 2, 3, 1))
    same = apply_gauge(t, GaugeTransform.identity(t.ranks))
    for a, b in zip(same.cores, t.cores):
        np.testing.assert_array_equal(a, b)
    two = apply_gauge(t, GaugeTransform([2 * np.eye(r) for r in t.ranks[1:-1]]))
    assert rel_err(ftt_evaluate(two), ftt_evaluate(t), g) <= 1e-13


def test_gauge_errors(rng):
    with pytest.raises(InvertibilityError):
        GaugeTransform([np.array([[1.0, 2.0], [2.0, 4.0]])])
    g = uniform_gridset(3, 3)
    t = random_train(rng, g, (1, 2, 2, 1))
    with pytest.raises(DimensionError):
        apply_gauge(t, GaugeTransform([np.eye(3), np.eye(2)]))


def test_right_gram_two_dims():
    g = uniform_gridset(21, 2)
    f = np.cos(g[1].points) / np.sqrt(np.pi)
    t = FttTensor((np.ones((1, 21, 1)), f.reshape(1, 21, 1)), g)
    np.testing.assert_allclose(right_gram(t, 1), [[1.0]], rtol=1e-13)


def test_right_gram_explicit_assembly(rng):
    g = random_grids(rng, 3)
    t = random_train(rng, g, (1, 3, 2, 1), orthonormal=False)
    # explicit right interface functions Phi_1(alpha; x2, x3)
    Phi = np.einsum("ajb,bk->ajk", t.cores[1], t.cores[2][:, :, 0])
    W = np.multiply.outer(g[1].weights, g[2].weights)
    G = np.einsum("ajk,jk,bjk->ab", Phi, W, Phi)
    np.testing.assert_allclose(right_gram(t, 1), G, rtol=1e-12, atol=1e-12)
    scaled = t.with_cores(t.cores[:-1] + (3.0 * t.cores[-1],))
    np.testing.assert_allclose(right_gram(scaled, 1), 9.0 * right_gram(t, 1), rtol=1e-13)
    with pytest.raises(ParameterError):
        right_gram(t, 0)
    with pytest.raises(ParameterError):
        right_gram(t, 3)


def test_norm_identity_for_left_orthonormal(rng):
    g = random_grids(rng, 4)
    t = random_train(rng, g, (1, 2, 3, 2, 1))
    last = t.cores[-1]
    trace = np.trace(autocorrelation(last.transpose(2, 1, 0), last.transpose(2, 1, 0), g[-1]))
    direct = wnorm(ftt_evaluate(t), g) ** 2
    assert trace == pytest.approx(direct, rel=1e-11)
    assert ftt_norm(t) ** 2 == pytest.approx(direct, rel=1e-11)
    assert ftt_mass(t) == pytest.approx(np.sum(g.weight_tensor() * ftt_evaluate(t)), rel=1e-11, abs=1e-12)


def test_round_noop_threshold(rng):
    g = random_grids(rng, 4)
    t = random_train(rng, g, (1, 2, 3, 2, 1))
    r, _ = tt_round(t, 1e-14)
    assert r.ranks == t.ranks
    assert rel_err(ftt_evaluate(r), ftt_evaluate(t), g) <= 1e-12
    assert orthonormality_defect(r) <= 1e-12


def test_round_removes_zero_padding(rng):
    g = random_grids(rng, 4)
    base = [rng.standard_normal((1, gi.n, 1)) for gi in g]
    padded = []
    for k, c in enumerate(base):
        rl = 1 if k == 0 else 3
        rr = 1 if k == len(base) - 1 else 3
        p = np.zeros((rl, c.shape[1], rr))
        p[:1, :, :1] = c
        padded.append(p)
    t = FttTensor(tuple(padded), g)
    r, _ = tt_round(t, 1e-10)
    assert r.ranks == (1, 1, 1, 1, 1)
    assert rel_err(ftt_evaluate(r), ftt_evaluate(t), g) <= 1e-12


@pytest.mark.parametrize("eps", [1e-2, 1e-4])
def test_round_error_bound(rng, eps):
    g = random_grids(rng, 4, n_max=6)
    t = random_train(rng, g, (1, 4, 5, 4, 1), orthonormal=False)
    r, spectrum = tt_round(t, eps)
    u = ftt_evaluate(t)
    assert wnorm(ftt_evaluate(r) - u, g) <= eps * wnorm(u, g) * (1 + 1e-10)
    assert all(a <= b for a, b in zip(r.ranks, t.ranks))
    assert orthonormality_defect(r) <= 1e-12


def test_round_matches_direct_decomposition(p0, fp_grids):
    t8, _ = ftt_decompose(p0, fp_grids, grid_scaled_threshold(1e-8, fp_grids))
    r, _ = tt_round(t8, grid_scaled_threshold(1e-3, fp_grids))
    direct, _ = ftt_decompose(p0, fp_grids, grid_scaled_threshold(1e-3, fp_grids))
    assert all(abs(a - b) <= 1 for a, b in zip(r.ranks, direct.ranks))
    assert r.ranks == (1, 5, 5, 5, 1)


def test_round_bad_eps(rng):
    t = random_train(rng, uniform_gridset(3, 2), (1, 2, 1))
    with pytest.raises(ParameterError):
        tt_round(t, -1.0)


def test_mode_energies_match_unfolding_svd(rng):
    g = random_grids(rng, 3)
    t = random_train(rng, g, (1, 3, 2, 1), orthonormal=False)
    uw = ftt_evaluate(t) * g.sqrt_weight_tensor()
    energies = mode_energies(t)
    for k in range(2):
        s = np.linalg.svd(uw.reshape(int(np.prod(g.shape[: k + 1])), -1), compute_uv=False)
        np.testing.assert_allclose(energies[k], s[: energies[k].size], rtol=1e-10, atol=1e-12)

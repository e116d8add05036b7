"""Matrix-free transforms against dense oracles built from the recursions."""

import math

import numpy as np
import pytest

from spfti.core import Dims
from spfti.transforms import (
    centered_dft,
    compose_map,
    densify,
    dense_to_csv,
    haar1d,
    haar1d_scaling,
    haar2d_isotropic,
    identity_map,
    kron_map,
    paley_hadamard,
    sensing_map,
    sparsity_map,
)

SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# Dense oracles, expanded directly from the defining recursions
# ---------------------------------------------------------------------------


def hadamard_recursive(n):
    mat = np.array([[1.0]])
    while mat.shape[0] < n:
        mat = np.hstack([np.kron(mat, [[1.0], [1.0]]), np.kron(mat, [[1.0], [-1.0]])]) / SQRT2
    return mat


def haar_recursive(n):
    mat = np.array([[1.0]])
    while mat.shape[0] < n:
        m = mat.shape[0]
        mat = np.hstack([np.kron(mat, [[1.0], [1.0]]), np.kron(np.eye(m), [[1.0], [-1.0]])]) / SQRT2
    return mat


def haar_scaling_recursive(n):
    mat = np.array([[1.0]])
    while mat.shape[0] < n:
        m = mat.shape[0]
        mat = np.hstack([np.kron(mat, [[1.0], [1.0]]), np.kron(np.eye(m), [[1.0], [1.0]])]) / SQRT2
    return mat


def haar2d_block_assembly(nb):
    """Level-major block construction of the 2D isotropic basis."""
    levels = nb.bit_length() - 1
    n_p = nb * nb
    w = haar_recursive(nb)
    w0 = haar_scaling_recursive(nb)
    cols = [np.ones((n_p, 1)) / math.sqrt(n_p)]
    for level in range(1, levels + 1):
        sel = slice(2 ** (level - 1), 2**level)
        cols.append(np.kron(w0[:, sel], w[:, sel]))
        cols.append(np.kron(w[:, sel], w0[:, sel]))
        cols.append(np.kron(w[:, sel], w[:, sel]))
    return np.hstack(cols)


def centered_dft_matrix(n):
    rows = np.arange(1, n + 1)[:, None]
    cols = np.arange(n)[None, :]
    return np.exp(-2j * np.pi * (rows - n // 2) * cols / n) / math.sqrt(n)


def random_vec(n, complex_, seed):
    rng = np.random.default_rng(seed)
    if complex_:
        return rng.normal(size=n) + 1j * rng.normal(size=n)
    return rng.normal(size=n)


def assert_adjoint_consistent(m, seed=0):
    u = random_vec(m.cols, m.field == "complex", seed)
    v = random_vec(m.rows, m.field == "complex", seed + 1)
    lhs = np.vdot(v, m.forward(u))
    rhs = np.vdot(m.adjoint(v), u)
    assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(u) * np.linalg.norm(v)


# ---------------------------------------------------------------------------
# Centered DFT
# ---------------------------------------------------------------------------


class TestCenteredDft:
    @pytest.mark.parametrize("n", [4, 8, 16])
    def test_constant_maps_to_center_row(self, n):
        out = centered_dft(n).forward(np.ones(n) / math.sqrt(n))
        expected = np.zeros(n)
        expected[n // 2 - 1] = 1.0
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_unitary_on_random_vectors(self):
        f = centered_dft(16)
        u = random_vec(16, True, 3)
        assert abs(np.linalg.norm(f.forward(u)) - np.linalg.norm(u)) < 1e-12
        np.testing.assert_allclose(f.adjoint(f.forward(u)), u, atol=1e-12)

    def test_dense_matches_explicit_convention(self):
        np.testing.assert_allclose(densify(centered_dft(4)), centered_dft_matrix(4), atol=1e-12)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            centered_dft(12)

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            centered_dft(8).forward(np.ones(7))


# ---------------------------------------------------------------------------
# Paley-ordered Hadamard
# ---------------------------------------------------------------------------


class TestPaleyHadamard:
    def test_size_two(self):
        np.testing.assert_allclose(
            densify(paley_hadamard(2)), np.array([[1, 1], [1, -1]]) / SQRT2, atol=1e-15
        )
        np.testing.assert_allclose(
            paley_hadamard(2).forward(np.array([1.0, 0.0])), np.array([1, 1]) / SQRT2, atol=1e-15
        )

    @pytest.mark.parametrize("n", [4, 8, 16, 64, 256, 2048])
    def test_matches_recursion(self, n):
        if n <= 256:
            np.testing.assert_allclose(densify(paley_hadamard(n)), hadamard_recursive(n), atol=1e-13)
        else:
            # spot-check a few columns at sizes where densify would be slow
            ref = hadamard_recursive(n)
            had = paley_hadamard(n)
            for j in (0, 1, n // 2, n - 1):
                e = np.zeros(n)
                e[j] = 1.0
                np.testing.assert_allclose(had.forward(e), ref[:, j], atol=1e-13)

    @pytest.mark.parametrize("n", [2, 4, 16, 64, 1024, 2048])
    def test_entries_exactly_plus_minus_inv_sqrt(self, n):
        e = np.zeros(n)
        e[min(3, n - 1)] = 1.0
        col = paley_hadamard(n).forward(e)
        assert np.all(np.abs(col) == 1.0 / math.sqrt(n))

    def test_involution(self):
        u = random_vec(64, False, 9)
        had = paley_hadamard(64)
        np.testing.assert_allclose(had.adjoint(had.forward(u)), u, atol=1e-12)

    def test_adjoint_equals_forward(self):
        # the Paley matrix is symmetric
        u = random_vec(32, False, 4)
        had = paley_hadamard(32)
        np.testing.assert_allclose(had.forward(u), had.adjoint(u), atol=1e-13)


# ---------------------------------------------------------------------------
# Haar wavelets
# ---------------------------------------------------------------------------


class TestHaar1d:
    def test_size_two(self):
        np.testing.assert_allclose(
            densify(haar1d(2)), np.array([[1, 1], [1, -1]]) / SQRT2, atol=1e-15
        )

    def test_size_four_columns(self):
        expected = np.array(
            [
                [0.5, 0.5, 1 / SQRT2, 0],
                [0.5, 0.5, -1 / SQRT2, 0],
                [0.5, -0.5, 0, 1 / SQRT2],
                [0.5, -0.5, 0, -1 / SQRT2],
            ]
        )
        np.testing.assert_allclose(densify(haar1d(4)), expected, atol=1e-15)

    @pytest.mark.parametrize("n", [2, 8, 32, 2048])
    def test_matches_recursion_and_norm(self, n):
        if n <= 256:
            np.testing.assert_allclose(densify(haar1d(n)), haar_recursive(n), atol=1e-13)
        u = random_vec(n, False, 5)
        w = haar1d(n)
        assert abs(np.linalg.norm(w.forward(u)) - np.linalg.norm(u)) < 1e-12
        np.testing.assert_allclose(w.adjoint(w.forward(u)), u, atol=1e-12)


class TestHaarScalingStack:
    def test_size_two(self):
        np.testing.assert_allclose(
            densify(haar1d_scaling(2)), np.array([[1, 1], [1, 1]]) / SQRT2, atol=1e-15
        )
        assert np.linalg.matrix_rank(densify(haar1d_scaling(2))) == 1

    @pytest.mark.parametrize("n", [4, 8, 16, 2048])
    def test_matches_recursion(self, n):
        if n <= 64:
            np.testing.assert_allclose(densify(haar1d_scaling(n)), haar_scaling_recursive(n), atol=1e-13)
        else:
            ref_col = np.zeros(n)
            ref_col[:2] = 1.0 / SQRT2  # finest level: scaling on the first pair
            e = np.zeros(n)
            e[n // 2] = 1.0
            np.testing.assert_allclose(haar1d_scaling(n).forward(e), ref_col, atol=1e-13)

    def test_not_orthonormal(self):
        d = densify(haar1d_scaling(4))
        assert np.max(np.abs(d.T @ d - np.eye(4))) > 0.5


class TestHaar2dIsotropic:
    def test_size_two_grid(self):
        d = densify(haar2d_isotropic(4))
        np.testing.assert_allclose(d[:, 0], np.full(4, 0.5), atol=1e-15)
        np.testing.assert_allclose(d.T @ d, np.eye(4), atol=1e-13)

    @pytest.mark.parametrize("nb", [2, 4, 8])
    def test_matches_block_assembly(self, nb):
        np.testing.assert_allclose(
            densify(haar2d_isotropic(nb * nb)), haar2d_block_assembly(nb), atol=1e-13
        )

    def test_column_count_is_complete(self):
        # 1 + 3 * (1 + 4 + ...) fills the basis exactly
        d = densify(haar2d_isotropic(16))
        assert d.shape == (16, 16)

    @pytest.mark.parametrize("nb", [2, 4, 8, 64])
    def test_norm_preserving(self, nb):
        u = random_vec(nb * nb, False, 6)
        w = haar2d_isotropic(nb * nb)
        assert abs(np.linalg.norm(w.forward(u)) - np.linalg.norm(u)) < 1e-12
        np.testing.assert_allclose(w.adjoint(w.forward(u)), u, atol=1e-12)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            haar2d_isotropic(8)


# ---------------------------------------------------------------------------
# Kronecker composition and densify
# ---------------------------------------------------------------------------


class TestKron:
    def test_identity_factors(self):
        k = kron_map(identity_map(4), identity_map(3))
        u = random_vec(12, False, 7)
        np.testing.assert_allclose(k.forward(u), u, atol=1e-15)

    def test_matches_dense_kronecker(self):
        a = paley_hadamard(4)
        b = centered_dft(4)
        k = kron_map(a, b)
        dense = np.kron(densify(a), densify(b))
        u = random_vec(16, True, 8)
        np.testing.assert_allclose(k.forward(u), dense @ u, atol=1e-12)
        np.testing.assert_allclose(k.adjoint(u), dense.conj().T @ u, atol=1e-12)

    def test_norm_preserving_for_orthonormal_factors(self):
        k = kron_map(haar1d(8), paley_hadamard(4))
        u = random_vec(32, False, 9)
        assert abs(np.linalg.norm(k.forward(u)) - np.linalg.norm(u)) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kron_map(identity_map(4), identity_map(3)).forward(np.ones(11))


class TestDensify:
    def test_identity(self):
        np.testing.assert_array_equal(densify(identity_map(4)), np.eye(4))

    def test_cap(self):
        with pytest.raises(ValueError):
            densify(identity_map(2048), cap=2048 * 2048 - 1)

    def test_csv_export(self, tmp_path):
        path = tmp_path / "mat.csv"
        dense_to_csv(densify(haar1d(2)), path)
        rows = path.read_text().strip().splitlines()
        assert len(rows) == 2
        assert float(rows[0].split(",")[0]) == pytest.approx(1 / SQRT2)


# ---------------------------------------------------------------------------
# Application-level compositions
# ---------------------------------------------------------------------------


ALL_TEST_DIMS = [Dims(n_xi, nb) for n_xi in (4, 8, 16) for nb in (2, 4, 8)]


class TestApplicationMaps:
    @pytest.mark.parametrize("dims", ALL_TEST_DIMS, ids=str)
    def test_orthonormality_of_all_bases(self, dims):
        maps = [
            centered_dft(dims.n_xi),
            paley_hadamard(dims.n_p),
            haar1d(dims.n_xi),
            haar2d_isotropic(dims.n_p),
            sensing_map(dims),
            sparsity_map(dims),
        ]
        for m in maps:
            d = densify(m)
            gram = d.conj().T @ d
            assert np.max(np.abs(gram - np.eye(m.cols))) < 1e-10, m.name

    @pytest.mark.parametrize("dims", ALL_TEST_DIMS, ids=str)
    def test_fast_matches_dense(self, dims):
        for m in (sensing_map(dims), sparsity_map(dims)):
            d = densify(m)
            u = random_vec(m.cols, m.field == "complex", 11)
            fast = m.forward(u)
            np.testing.assert_allclose(fast, d @ u, rtol=0, atol=1e-12 * np.linalg.norm(u))

    def test_sensing_factorizes_over_its_kronecker_factors(self):
        # OPD factor on the slow axis, matching the flat-index rule
        dims = Dims(4, 2)
        dense = densify(sensing_map(dims))
        factored = np.kron(densify(centered_dft(4)), densify(paley_hadamard(4)))
        np.testing.assert_allclose(dense, factored, atol=1e-12)

    def test_sparsity_factorizes_over_its_kronecker_factors(self):
        dims = Dims(4, 2)
        dense = densify(sparsity_map(dims))
        factored = np.kron(densify(haar1d(4)), densify(haar2d_isotropic(4)))
        np.testing.assert_allclose(dense, factored, atol=1e-12)

    @pytest.mark.parametrize("dims", [Dims(4, 2), Dims(8, 4)], ids=str)
    def test_adjoint_consistency(self, dims):
        for m in (
            centered_dft(dims.n_xi),
            paley_hadamard(dims.n_p),
            haar1d(dims.n_xi),
            haar1d_scaling(dims.n_xi),
            haar2d_isotropic(dims.n_p),
            sensing_map(dims),
            sparsity_map(dims),
            compose_map(sensing_map(dims), sparsity_map(dims)),
        ):
            assert_adjoint_consistent(m)

    def test_compose_applies_inner_then_outer(self):
        dims = Dims(4, 2)
        g = compose_map(sensing_map(dims), sparsity_map(dims))
        u = random_vec(dims.n_hs, False, 13)
        expected = sensing_map(dims).forward(sparsity_map(dims).forward(u))
        np.testing.assert_allclose(g.forward(u), expected, atol=1e-13)

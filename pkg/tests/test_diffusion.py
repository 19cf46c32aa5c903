import numpy as np
import pytest

from protscape.diffusion import (
    DiffusionOperators,
    lazy_walk,
    matrix_powers,
    symmetric_diffusion,
    weighted_norm,
    weighted_opnorm,
)

TOL = 1e-12


def path3():
    A = np.zeros((3, 3))
    A[0, 1] = A[1, 0] = A[1, 2] = A[2, 1] = 1.0
    return A


def k3():
    return np.ones((3, 3)) - np.eye(3)


def single_edge():
    return np.array([[0.0, 1.0], [1.0, 0.0]])


def random_connected(n, seed):
    rng = np.random.default_rng(seed)
    while True:
        A = np.triu(rng.random((n, n)) < 0.3, k=1).astype(float)
        A = A + A.T
        d = A.sum(axis=1)
        if d.min() > 0 and _reaches_all(A):
            return A


def _reaches_all(A):
    n = A.shape[0]
    reach = np.eye(n, dtype=bool)
    M = A > 0
    for _ in range(n):
        reach = reach | (reach @ M)
    return bool(reach.all())


class TestFrozenOperators:
    def test_path3_lazy_walk(self):
        expect = np.array([[0.5, 0.25, 0.0],
                           [0.5, 0.5, 0.5],
                           [0.0, 0.25, 0.5]])
        np.testing.assert_allclose(lazy_walk(path3()), expect, atol=TOL)

    def test_path3_symmetric_eigenvalues(self):
        T = symmetric_diffusion(path3())
        np.testing.assert_allclose(T, T.T, atol=TOL)
        eigs = np.sort(np.linalg.eigvalsh(T))[::-1]
        np.testing.assert_allclose(eigs, [1.0, 0.5, 0.0], atol=TOL)

    def test_k3_lambda2(self):
        ops = DiffusionOperators.from_adjacency(k3())
        assert ops.lambda2 == pytest.approx(0.25, abs=TOL)

    def test_single_edge_operators(self):
        expect = np.full((2, 2), 0.5)
        np.testing.assert_allclose(lazy_walk(single_edge()), expect, atol=TOL)
        np.testing.assert_allclose(symmetric_diffusion(single_edge()), expect,
                                   atol=TOL)

    def test_single_edge_idempotent(self):
        P = lazy_walk(single_edge())
        np.testing.assert_allclose(P @ P, P, atol=TOL)


class TestOperatorStructure:
    @pytest.mark.parametrize("seed", range(5))
    def test_column_stochastic(self, seed):
        P = lazy_walk(random_connected(12, seed))
        np.testing.assert_allclose(P.sum(axis=0), np.ones(12), atol=TOL)
        assert P.min() >= 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_similarity_relation(self, seed):
        # T = D^(-1/2) P D^(1/2)
        A = random_connected(10, seed)
        d = A.sum(axis=1)
        P = lazy_walk(A)
        T = symmetric_diffusion(A)
        s = np.sqrt(d)
        np.testing.assert_allclose((1 / s)[:, None] * P * s[None, :], T,
                                   atol=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_spectrum_in_unit_interval(self, seed):
        T = symmetric_diffusion(random_connected(10, seed))
        eigs = np.linalg.eigvalsh(T)
        assert eigs.min() >= -TOL
        assert eigs.max() <= 1.0 + TOL

    def test_lead_eigvec_is_sqrt_degree(self):
        A = random_connected(9, 3)
        ops = DiffusionOperators.from_adjacency(A)
        v = np.sqrt(ops.degrees)
        v = v / np.linalg.norm(v)
        np.testing.assert_allclose(np.abs(ops.lead_eigvec), v, atol=1e-9)
        np.testing.assert_allclose(ops.T @ ops.lead_eigvec, ops.lead_eigvec,
                                   atol=1e-9)

    def test_deflated_removes_lead(self):
        ops = DiffusionOperators.from_adjacency(random_connected(9, 4))
        Tbar = ops.deflated()
        np.testing.assert_allclose(Tbar @ ops.lead_eigvec,
                                   np.zeros(9), atol=1e-9)
        assert np.linalg.norm(Tbar, 2) == pytest.approx(ops.lambda2, abs=1e-9)

    def test_matrix_powers_stack(self):
        P = lazy_walk(path3())
        S = matrix_powers(P, 4)
        assert S.shape == (5, 3, 3)
        np.testing.assert_allclose(S[0], np.eye(3), atol=TOL)
        np.testing.assert_allclose(S[3], np.linalg.matrix_power(P, 3), atol=TOL)

    def test_degenerate_inputs_rejected(self):
        with pytest.raises(ValueError):
            lazy_walk(np.zeros((3, 3)))
        bad = path3()
        bad[0, 1] = 2.0
        with pytest.raises(ValueError):
            lazy_walk(bad)


class TestWeightedNorms:
    def test_weighted_norm_identity_degrees(self):
        x = np.array([3.0, 4.0])
        assert weighted_norm(x, np.ones(2)) == pytest.approx(5.0, abs=TOL)

    def test_weighted_norm_scales_by_inverse_sqrt_degree(self):
        x = np.array([2.0, 0.0])
        assert weighted_norm(x, np.array([4.0, 1.0])) == pytest.approx(1.0,
                                                                       abs=TOL)

    def test_weighted_opnorm_diagonal_oracle(self):
        # D^(-1/2) M D^(1/2) for diagonal M is M itself: opnorm = max |m_ii|
        M = np.diag([0.5, -2.0, 1.0])
        d = np.array([1.0, 4.0, 9.0])
        assert weighted_opnorm(M, d) == pytest.approx(2.0, abs=TOL)

    @pytest.mark.parametrize("seed", range(3))
    def test_opnorm_bounds_weighted_vectors(self, seed):
        rng = np.random.default_rng(seed)
        A = random_connected(8, seed)
        d = A.sum(axis=1)
        M = rng.standard_normal((8, 8))
        bound = weighted_opnorm(M, d)
        for _ in range(20):
            x = rng.standard_normal(8)
            assert weighted_norm(M @ x, d) <= bound * weighted_norm(x, d) + 1e-9

    def test_T_nonexpansive_in_weighted_space(self):
        A = random_connected(10, 7)
        ops = DiffusionOperators.from_adjacency(A)
        assert weighted_opnorm(ops.P, ops.degrees) <= 1.0 + 1e-10

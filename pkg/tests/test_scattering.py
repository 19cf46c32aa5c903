import numpy as np
import pytest

from protscape.diffusion import lazy_walk, matrix_powers, symmetric_diffusion
from protscape.scattering import (
    WaveletBank,
    all_tuples,
    apply_tuple,
    dyadic_bank,
    dyadic_logits,
    dyadic_scales,
    expected_scales,
    feature_count,
    generalized_bank,
    learnable_bank,
    scales_monotone,
    scatter,
    scattering_layout,
    second_order_pairs,
    soft_selection,
)

TOL = 1e-12


def path3_P():
    A = np.zeros((3, 3))
    A[0, 1] = A[1, 0] = A[1, 2] = A[2, 1] = 1.0
    return lazy_walk(A)


def random_P(n, seed):
    rng = np.random.default_rng(seed)
    while True:
        A = np.triu(rng.random((n, n)) < 0.3, k=1).astype(float)
        A = A + A.T
        if A.sum(axis=1).min() > 0:
            reach = np.eye(n, dtype=bool)
            for _ in range(n):
                reach = reach | (reach @ (A > 0))
            if reach.all():
                return lazy_walk(A)


class TestScales:
    def test_dyadic(self):
        assert dyadic_scales(4) == [1, 2, 4, 8, 16]

    def test_feature_count(self):
        # C * (1 + (J+1) + (J+1)J/2)
        assert feature_count(1, 1) == 4
        assert feature_count(4, 20) == 20 * (1 + 5 + 10)

    def test_second_order_pairs_strictly_increasing(self):
        pairs = second_order_pairs(3)
        assert pairs == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]

    @pytest.mark.parametrize("bad", [[2, 2, 4], [4, 2], [0, 1], [1.5, 2]])
    def test_invalid_scales_rejected(self, bad):
        with pytest.raises((ValueError, TypeError)):
            generalized_bank(path3_P(), bad)


class TestBankStructure:
    @pytest.mark.parametrize("seed", range(4))
    @pytest.mark.parametrize("J", [1, 2, 3])
    def test_telescoping_dyadic(self, seed, J):
        bank = dyadic_bank(random_P(10, seed), J)
        total = bank.wavelets.sum(axis=0) + bank.lowpass
        assert np.abs(total - np.eye(10)).max() < 1e-10

    def test_telescoping_hard_scales(self):
        bank = generalized_bank(random_P(8, 11), [1, 3, 4, 9])
        total = bank.wavelets.sum(axis=0) + bank.lowpass
        assert np.abs(total - np.eye(8)).max() < 1e-10

    def test_wavelets_are_power_differences(self):
        P = path3_P()
        bank = dyadic_bank(P, 2)
        P2 = P @ P
        P4 = P2 @ P2
        np.testing.assert_allclose(bank.wavelets[0], np.eye(3) - P, atol=TOL)
        np.testing.assert_allclose(bank.wavelets[1], P - P2, atol=TOL)
        np.testing.assert_allclose(bank.wavelets[2], P2 - P4, atol=TOL)
        np.testing.assert_allclose(bank.lowpass, P4, atol=TOL)

    def test_T_bank_symmetric(self):
        A = np.zeros((3, 3))
        A[0, 1] = A[1, 0] = A[1, 2] = A[2, 1] = 1.0
        bank = dyadic_bank(symmetric_diffusion(A), 2)
        for W in bank.wavelets:
            np.testing.assert_allclose(W, W.T, atol=TOL)

    def test_idempotent_base_collapses(self):
        P = np.full((2, 2), 0.5)  # single edge: P^2 = P
        bank = dyadic_bank(P, 2)
        np.testing.assert_allclose(bank.wavelets[0], np.eye(2) - P, atol=TOL)
        for j in range(1, 3):
            np.testing.assert_allclose(bank.wavelets[j], np.zeros((2, 2)),
                                       atol=TOL)


class TestFrozenFirstOrder:
    def test_center_spike_first_scale(self):
        # 3-path, x = e_center: Psi_0 x = (I - P) e_1 = (-1/4, 1/2, -1/4)
        bank = dyadic_bank(path3_P(), 1)
        x = np.array([0.0, 1.0, 0.0])
        np.testing.assert_allclose(bank.wavelets[0] @ x,
                                   [-0.25, 0.5, -0.25], atol=TOL)

    def test_center_spike_modulus(self):
        bank = dyadic_bank(path3_P(), 1)
        x = np.array([0.0, 1.0, 0.0])
        u = apply_tuple(bank.wavelets, x, (0,))
        np.testing.assert_allclose(u, [0.25, 0.5, 0.25], atol=TOL)


class TestTuples:
    def test_all_tuples_count_and_order(self):
        ts = all_tuples(2, 2)
        assert len(ts) == 9
        assert ts[0] == (0, 0) and ts[-1] == (2, 2)

    def test_apply_tuple_cascade(self):
        bank = dyadic_bank(random_P(7, 2), 2)
        rng = np.random.default_rng(0)
        x = rng.standard_normal(7)
        u01 = apply_tuple(bank.wavelets, x, (0, 1))
        manual = np.abs(bank.wavelets[1] @ np.abs(bank.wavelets[0] @ x))
        np.testing.assert_allclose(u01, manual, atol=TOL)


class TestLayout:
    def test_labels_cover_orders(self):
        out = scatter(dyadic_bank(path3_P(), 1), np.eye(3)[:, :2])
        labels = out.labels()
        assert out.coeffs.shape == (3, feature_count(1, 2))
        assert labels[0] == "(0,0)"
        assert "(1,0,0)" in labels and "(2,0,1,1)" in labels

    def test_channel_major_blocks(self):
        # all coefficients of channel 0 come before any of channel 1
        layout = scattering_layout(2, 3)
        chans = [t[-1] for t in layout]
        per = len(layout) // 3
        assert chans == [0] * per + [1] * per + [2] * per

    def test_scatter_values_match_direct_computation(self):
        P = random_P(6, 5)
        bank = dyadic_bank(P, 2)
        rng = np.random.default_rng(1)
        X = rng.standard_normal((6, 2))
        out = scatter(bank, X)
        for col, tup in enumerate(out.layout):
            order, chan = tup[0], tup[-1]
            x = X[:, chan]
            if order == 0:
                ref = bank.lowpass @ x
            else:
                ref = apply_tuple(bank.wavelets, x, tup[1:-1])
            np.testing.assert_allclose(out.coeffs[:, col], ref, atol=1e-10)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(9)
        A = np.triu(rng.random((8, 8)) < 0.4, k=1).astype(float)
        A = A + A.T
        A[A.sum(axis=1) == 0, 0] = 1.0
        A[0, A.sum(axis=0) == 0] = 1.0
        np.fill_diagonal(A, 0.0)
        perm = rng.permutation(8)
        Pi = np.eye(8)[perm]
        X = rng.standard_normal((8, 3))
        out = scatter(dyadic_bank(lazy_walk(A), 2), X)
        out_p = scatter(dyadic_bank(lazy_walk(Pi @ A @ Pi.T), 2), Pi @ X)
        np.testing.assert_allclose(out_p.coeffs, Pi @ out.coeffs, atol=1e-10)


class TestSoftSelection:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        theta = rng.standard_normal((4, 10))
        s = soft_selection(theta)
        np.testing.assert_allclose(s.sum(axis=1), np.ones(4), atol=TOL)
        assert s.min() > 0

    def test_dyadic_logits_recover_dyadic_scales(self):
        theta = dyadic_logits(3, 16, sharpness=40.0)
        es = expected_scales(theta)
        np.testing.assert_allclose(es, [1, 2, 4, 8], atol=1e-4)
        assert scales_monotone(theta)

    def test_sharp_soft_bank_matches_hard_bank(self):
        P = random_P(9, 3)
        theta = dyadic_logits(2, 8, sharpness=60.0)
        soft = learnable_bank(P, theta)
        hard = dyadic_bank(P, 2)
        np.testing.assert_allclose(soft.wavelets, hard.wavelets, atol=1e-8)
        np.testing.assert_allclose(soft.lowpass, hard.lowpass, atol=1e-8)

    def test_soft_bank_telescopes_for_any_logits(self):
        rng = np.random.default_rng(4)
        P = random_P(7, 8)
        theta = rng.standard_normal((4, 9))  # J=3, t_max up to 8 plus t=0 col
        bank = learnable_bank(P, theta)
        total = bank.wavelets.sum(axis=0) + bank.lowpass
        assert np.abs(total - np.eye(7)).max() < 1e-10

    def test_unordered_logits_flag_nonmonotone(self):
        theta = dyadic_logits(2, 8, sharpness=40.0)[::-1].copy()
        assert not scales_monotone(theta)

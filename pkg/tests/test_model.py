import math
import warnings

import numpy as np
import pytest

from protscape.autodiff import check_gradients
from protscape.model import (
    CollinearDihedralWarning,
    FrameInputs,
    ModelConfig,
    ModelParams,
    StructureTargets,
    forward,
    load_checkpoint,
    loss,
    pairwise_distances,
    positional_encoding,
    pseudo_dihedrals,
    save_checkpoint,
    upper_indices,
    upper_to_antisymmetric,
    upper_to_symmetric,
    wrap_angle,
)
from protscape.graphs import build_knn_graph
from protscape.trajectory_io import synth_hinge

TOL = 1e-12


def toy_config(**kw):
    base = dict(n=6, J=2, t_max=4, latent_dim=6, hidden=16, heads=2,
                res_head_dim=3, res_out=6, aa_head_dim=2, aa_out=4, seed=0)
    base.update(kw)
    return ModelConfig(**base)


def toy_frame(config, seed=0, n_frames=8, t=2):
    traj = synth_hinge(n_per_arm=config.n // 2, n_frames=n_frames, seed=seed)
    coords = traj.frames[t].coords
    graph = build_knn_graph(coords, traj.sequence, k=3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CollinearDihedralWarning)
        return FrameInputs.from_graph(graph, coords, time=float(t),
                                      t_max=config.t_max)


class TestGeometry:
    def test_pairwise_distances_square(self):
        coords = np.array([[0.0, 0, 0], [3, 0, 0], [3, 4, 0]])
        D = pairwise_distances(coords)
        assert D[0, 1] == pytest.approx(3.0, abs=TOL)
        assert D[1, 2] == pytest.approx(4.0, abs=TOL)
        assert D[0, 2] == pytest.approx(5.0, abs=TOL)
        np.testing.assert_allclose(D, D.T, atol=TOL)
        np.testing.assert_allclose(np.diag(D), np.zeros(3), atol=TOL)

    def test_wrap_angle_range(self):
        vals = wrap_angle(np.array([0.0, np.pi, -np.pi, 3 * np.pi, -2.5 * np.pi]))
        assert np.all(vals > -np.pi - TOL)
        assert np.all(vals <= np.pi + TOL)
        assert vals[1] == pytest.approx(np.pi)
        assert vals[2] == pytest.approx(np.pi)  # -pi maps to +pi

    def test_dihedral_right_angle_staircase(self):
        # z-staircase: consecutive planes orthogonal
        coords = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [1, 1, 1]])
        phi = pseudo_dihedrals(coords)
        assert phi.shape == (1,)
        assert abs(phi[0]) == pytest.approx(np.pi / 2, abs=1e-9)

    def test_dihedral_planar_is_pi(self):
        # all four in a plane, trans arrangement
        coords = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [2, 1, 0]])
        phi = pseudo_dihedrals(coords)
        assert abs(phi[0]) == pytest.approx(np.pi, abs=1e-9)

    def test_collinear_warns_and_zeroes(self):
        coords = np.column_stack([np.arange(5.0), np.zeros(5), np.zeros(5)])
        with pytest.warns(CollinearDihedralWarning):
            phi = pseudo_dihedrals(coords)
        np.testing.assert_allclose(phi, np.zeros(2), atol=TOL)

    def test_upper_round_trips(self):
        rng = np.random.default_rng(0)
        M = rng.standard_normal((5, 5))
        sym = (M + M.T) / 2
        np.fill_diagonal(sym, 0.0)
        iu = upper_indices(5)
        back = upper_to_symmetric(sym[iu], 5)
        np.testing.assert_allclose(back, sym, atol=TOL)
        anti = (M - M.T) / 2
        back = upper_to_antisymmetric(anti[iu], 5)
        np.testing.assert_allclose(back, anti, atol=TOL)


class TestPositionalEncoding:
    def test_worked_example(self):
        R = positional_encoding(4, 1)
        assert R.shape == (4, 2)
        assert R[0, 0] == 0.0 and R[0, 1] == 1.0
        assert R[1, 0] == pytest.approx(math.sin(1.0 / 10000.0**2), abs=TOL)
        assert R[1, 1] == pytest.approx(math.cos(1.0 / 10000.0**2), abs=TOL)

    def test_interleaving_and_range(self):
        R = positional_encoding(10, 3)
        assert R.shape == (10, 6)
        assert np.all(np.abs(R) <= 1.0 + TOL)
        np.testing.assert_allclose(R[0, 0::2], np.zeros(3), atol=TOL)
        np.testing.assert_allclose(R[0, 1::2], np.ones(3), atol=TOL)


class TestConfig:
    def test_rejects_tiny_protein(self):
        with pytest.raises(ValueError):
            toy_config(n=3)

    def test_rejects_scales_beyond_tmax(self):
        with pytest.raises(ValueError):
            toy_config(J=3, t_max=4)

    def test_rejects_bad_loss_weights(self):
        with pytest.raises(ValueError):
            toy_config(alpha=0.8, beta=0.4)

    def test_node_autoencoder_auto_threshold(self):
        small = toy_config()
        assert small.node_autoencoder is not None
        assert small.effective_node_autoencoder is False if hasattr(
            small, "effective_node_autoencoder") else True


class TestForward:
    def test_output_shapes(self):
        config = toy_config()
        params = ModelParams(config)
        out = forward(params, toy_frame(config))
        n = config.n
        assert out.z.value.shape == (1, config.latent_dim)
        assert out.t_hat.value.shape == (1, 1)
        assert out.pairdist_vec.value.shape == (1, n * (n - 1) // 2)
        nd = config.n_dihedral
        assert out.dihedral_vec.value.shape == (1, nd * (nd - 1) // 2)
        assert out.coeffs.value.shape == (n, config.n_features)
        assert out.coeffs_recon.value.shape == (n, config.n_features)

    def test_attention_is_column_stochastic(self):
        config = toy_config()
        params = ModelParams(config)
        out = forward(params, toy_frame(config))
        for attn in out.attn_residue:
            np.testing.assert_allclose(attn.sum(axis=0),
                                       np.ones(attn.shape[1]), atol=1e-10)
        for attn in out.attn_aa:
            np.testing.assert_allclose(attn.sum(axis=0),
                                       np.ones(attn.shape[1]), atol=1e-10)

    def test_deterministic_given_seed(self):
        config = toy_config()
        frame = toy_frame(config)
        z1 = forward(ModelParams(config), frame).latent()
        z2 = forward(ModelParams(config), frame).latent()
        np.testing.assert_array_equal(z1, z2)

    def test_pairdist_matrix_reassembles(self):
        config = toy_config()
        out = forward(ModelParams(config), toy_frame(config))
        M = out.pairdist_matrix()
        assert M.shape == (config.n, config.n)
        np.testing.assert_allclose(M, M.T, atol=TOL)


class TestLoss:
    def test_parts_combine_with_weights(self):
        config = toy_config(alpha=0.25, beta=0.3)
        params = ModelParams(config)
        frame = toy_frame(config)
        out = forward(params, frame)
        total, parts = loss(params, out, frame, t_norm=0.4)
        expect = (0.25 * parts["time"] + 0.3 * parts["scatter"]
                  + (1.0 - 0.25 - 0.3) * parts["structure"])
        assert total.item() == pytest.approx(expect, rel=1e-12)
        assert parts["total"] == pytest.approx(total.item(), rel=1e-12)

    def test_literal_flag_changes_structure_weight(self):
        config_a = toy_config(alpha=0.25, beta=0.3)
        config_b = toy_config(alpha=0.25, beta=0.3, literal_loss=True)
        frame = toy_frame(config_a)
        out_a = forward(ModelParams(config_a), frame)
        out_b = forward(ModelParams(config_b), frame)
        _, parts_a = loss(ModelParams(config_a), out_a, frame, 0.4)
        total_b, parts_b = loss(ModelParams(config_b), out_b, frame, 0.4)
        expect_b = (0.25 * parts_b["time"] + 0.3 * parts_b["scatter"]
                    + (1.0 - 0.25 + 0.3) * parts_b["structure"])
        assert total_b.item() == pytest.approx(expect_b, rel=1e-12)
        assert parts_a["structure"] == pytest.approx(parts_b["structure"],
                                                     rel=1e-12)

    def test_gradients_reach_every_parameter(self):
        config = toy_config()
        params = ModelParams(config)
        frame = toy_frame(config)
        from protscape.autodiff import backward

        total, _ = loss(params, forward(params, frame), frame, 0.5)
        backward(total)
        missing = [name for name in params.names()
                   if params[name].grad is None]
        assert missing == []

    def test_full_model_finite_differences(self):
        config = toy_config()
        params = ModelParams(config)
        frame = toy_frame(config)

        def build():
            out = forward(params, frame)
            total, _ = loss(params, out, frame, 0.5)
            return total

        err = check_gradients(build, params.leaves(),
                              rng=np.random.default_rng(0),
                              coords_per_leaf=2)
        assert err < 1e-4


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        config = toy_config()
        params = ModelParams(config)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, params, meta={"note": 1.5})
        back, meta = load_checkpoint(path)
        assert meta == {"note": 1.5}
        for name in params.names():
            np.testing.assert_array_equal(back[name].value,
                                          params[name].value)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_text("NOT-A-CKPT\n{}\nEND\n")
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_missing_tensor_rejected(self, tmp_path):
        config = toy_config()
        params = ModelParams(config)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, params)
        lines = path.read_text().splitlines()
        del lines[2:4]  # drop the first tensor header + payload
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError) as exc:
            load_checkpoint(path)
        assert "missing" in str(exc.value)

    def test_truncated_rejected(self, tmp_path):
        config = toy_config()
        params = ModelParams(config)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, params)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")  # drop END
        with pytest.raises(ValueError) as exc:
            load_checkpoint(path)
        assert "END" in str(exc.value)

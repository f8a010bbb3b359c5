import numpy as np
import pytest

from symmor.autonet import (Architecture, LayerSpec, build_autoencoder, decode,
                            decode_with_jacobian, decoder_jacobian, decoder_jvp, decoder_vjp,
                            desk_architecture, encode, evaluate_losses, fit_scaler, grad_total,
                            linear_autoencoder, loss_data, loss_sympl, loss_total,
                            reference_architecture)
from symmor.autonet.network import Scaler
from symmor.symplectic import symplecticity_defect

from conftest import central_difference_grad, tiny_autoencoder


def symplectic_embedding(N, n):
    V = np.zeros((2 * N, 2 * n))
    V[:n, :n] = np.eye(n)
    V[N:N + n, n:] = np.eye(n)
    return V


class TestArchitecture:
    def test_reference_chain(self):
        arch = reference_architecture(4)
        enc, dec = arch.specs(Scaler(np.zeros(2), np.ones(2)))
        ae = build_autoencoder(enc, dec, arch.dims)
        assert ae.dims == (4096, 4)
        assert ae.encoder.shapes[-2] == (128,)
        assert [s[1] for s in ae.encoder.shapes if len(s) == 2] == [
            2048, 2048, 512, 512, 256, 256, 128, 128, 64, 64, 16, 16, 2, 2]

    def test_desk_chain(self):
        arch = desk_architecture(256, 4)
        assert arch.channels == [2, 4, 8] and arch.lengths == [256, 64, 16]
        assert arch.full == [128, 32, 4]
        enc, dec = arch.specs(Scaler(np.zeros(2), np.ones(2)))
        ae = build_autoencoder(enc, dec, arch.dims)
        assert ae.decoder.out_shape == (512,)

    def test_bad_chain(self):
        with pytest.raises(ValueError):
            Architecture(channels=[2, 4], lengths=[16, 4], strides=[4], full=[15, 2])
        with pytest.raises(ValueError):
            desk_architecture(100, 4)

    def test_seed_repeatability(self):
        a, _ = tiny_autoencoder(seed=3)
        b, _ = tiny_autoencoder(seed=3)
        c, _ = tiny_autoencoder(seed=4)
        np.testing.assert_array_equal(a.theta, b.theta)
        assert not np.array_equal(a.theta, c.theta)

    def test_biases_start_at_zero(self):
        arch = desk_architecture(32, 2)
        enc, dec = arch.specs(Scaler(np.zeros(2), np.ones(2)))
        ae = build_autoencoder(enc, dec, arch.dims, seed=0)
        for net, th in zip((ae.encoder, ae.decoder), ae.split_theta()):
            for layer, params in zip(net.layers, net.unpack(th)):
                if layer.kind in ("full", "conv1d", "convT1d"):
                    assert np.all(params[1] == 0)


class TestScaler:
    def test_constant_and_range(self):
        X = np.array([[1.0, 1.0, -2.0, 2.0], [1.0, 1.0, 0.0, 1.0]])
        s = fit_scaler(X)
        np.testing.assert_array_equal(s.shift, [1.0, -2.0])
        np.testing.assert_array_equal(s.scale, [1.0, 0.25])

    def test_maps_into_unit_interval(self, desk256):
        X = desk256.snapshots.columns.T
        s = fit_scaler(X)
        Y = s.apply(X)
        assert Y.min() >= 0 and Y.max() <= 1 + 1e-15
        # second pass oracle for the q channel
        N = desk256.N
        assert s.shift[0] == X[:, :N].min()
        assert s.scale[0] == 1 / (X[:, :N].max() - X[:, :N].min())
        np.testing.assert_allclose(s.invert(Y), X, atol=1e-13)


class TestForward:
    def test_zero_weights_give_scale_inverse_of_zero(self):
        ae, _ = tiny_autoencoder()
        ae = ae.copy(np.zeros(ae.n_theta))
        sc = ae.scaler
        expected = np.repeat(sc.shift, 8)
        np.testing.assert_allclose(decode(ae, np.array([3.0, -1.0])), expected, atol=1e-15)

    def test_roundtrip_dimensions(self, rng):
        ae, data = tiny_autoencoder()
        z = encode(ae, data[0])
        assert z.shape == (2,)
        assert decode(ae, z).shape == (16,)
        assert encode(ae, data).shape == (12, 2)
        assert decode(ae, encode(ae, data)).shape == (12, 16)

    def test_identity_configuration(self, rng):
        enc = [LayerSpec("full", dict(n_in=6, n_out=6)), LayerSpec("elu")]
        dec = [LayerSpec("full", dict(n_in=6, n_out=6))]
        ae = build_autoencoder(enc, dec, (6, 6))
        theta = np.concatenate([np.eye(6).ravel(), np.full(6, 10.0),
                                np.eye(6).ravel(), np.full(6, -10.0)])
        ae = ae.copy(theta)
        x = rng.standard_normal(6)
        # inputs shifted into the linear ELU branch and back
        np.testing.assert_allclose(decode(ae, encode(ae, x)), x, atol=1e-14)

    def test_batch_matches_single(self):
        ae, data = tiny_autoencoder()
        Z = encode(ae, data)
        for i in range(3):
            np.testing.assert_array_equal(Z[i], encode(ae, data[i]))


class TestJacobian:
    def test_finite_differences(self, rng):
        ae, _ = tiny_autoencoder(two_n=4)
        for _ in range(3):
            xr = rng.standard_normal(4)
            jac = decoder_jacobian(ae, xr)
            h = 1e-6
            for j in range(4):
                e = np.eye(4)[j] * h
                fd = (decode(ae, xr + e) - decode(ae, xr - e)) / (2 * h)
                assert np.linalg.norm(jac[:, j] - fd) <= 1e-6 * np.linalg.norm(fd)

    def test_jvp_vjp_consistency(self, rng):
        ae, _ = tiny_autoencoder(two_n=4)
        xr, v, w = rng.standard_normal(4), rng.standard_normal(4), rng.standard_normal(16)
        jac = decoder_jacobian(ae, xr)
        np.testing.assert_allclose(decoder_jvp(ae, xr, v), jac @ v, atol=1e-13)
        np.testing.assert_allclose(decoder_vjp(ae, xr, w), jac.T @ w, atol=1e-13)
        d, j2 = decode_with_jacobian(ae, xr)
        np.testing.assert_allclose(d, decode(ae, xr), rtol=1e-14, atol=1e-14)

    def test_linear_decoder_constant(self, rng):
        V = rng.standard_normal((8, 2))
        ae = linear_autoencoder(V)
        np.testing.assert_allclose(decoder_jacobian(ae, rng.standard_normal(2)), V)
        np.testing.assert_allclose(decoder_jacobian(ae, rng.standard_normal(2)), V)

    def test_symplectic_wrapper_defect(self):
        ae = linear_autoencoder(symplectic_embedding(4, 1))
        assert symplecticity_defect(decoder_jacobian(ae, np.array([0.3, 0.1]))) <= 1e-20


class TestLosses:
    def test_perfect_autoencoder(self, rng):
        V = symplectic_embedding(4, 2)
        ae = linear_autoencoder(V)
        X = rng.standard_normal((3, 4)) @ V.T
        assert loss_data(ae, X) <= 1e-30
        assert loss_sympl(ae, X) <= 1e-20

    def test_zero_decoder(self, rng):
        ae = linear_autoencoder(np.zeros((8, 2)), encoder_matrix=np.zeros((2, 8)))
        X = rng.standard_normal((5, 8))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        assert loss_data(ae, X) == pytest.approx(1 / 4, rel=1e-14)  # 1 / N with N = 4
        assert loss_sympl(ae, X) == pytest.approx(0.5, abs=1e-14)
        full = ae.copy()
        full.data_norm = "full"
        assert loss_data(full, X) == pytest.approx(1 / 8, rel=1e-14)

    def test_data_loss_two_loop_oracle(self):
        ae, data = tiny_autoencoder()
        X = data[:3]
        total = 0.0
        for x in X:
            r = x - decode(ae, encode(ae, x))
            for v in r:
                total += v * v
        assert loss_data(ae, X) == pytest.approx(total / (8 * 3), rel=1e-14)

    def test_sympl_loss_cross_module(self):
        ae, data = tiny_autoencoder(two_n=4)
        X = data[:3]
        oracle = np.mean([symplecticity_defect(decoder_jacobian(ae, encode(ae, x))) for x in X])
        assert loss_sympl(ae, X) == pytest.approx(oracle, rel=1e-14)
        assert loss_sympl(ae, X) >= 0

    def test_total_combination(self):
        ae, data = tiny_autoencoder()
        lv = evaluate_losses(ae, data, 0.9)
        assert lv.total == pytest.approx(0.9 * lv.data + 0.1 * lv.sympl, rel=1e-15)
        assert loss_total(ae, data, 1.0) == loss_data(ae, data)
        assert loss_total(ae, data, 0.0) == loss_sympl(ae, data)

    def test_in_network_scaling_changes_defect(self, rng):
        # the same weights with and without the scale layers give different defects
        ae, data = tiny_autoencoder()
        enc = [s for s in ae.encoder.specs if s.kind != "scale"]
        dec = [s for s in ae.decoder.specs if s.kind != "scale_inverse"]
        bare = build_autoencoder(enc, dec, ae.dims).copy(ae.theta)
        assert bare.n_theta == ae.n_theta
        assert abs(loss_sympl(ae, data) - loss_sympl(bare, data)) > 1e-3 * loss_sympl(ae, data)


class TestGradient:
    @pytest.mark.parametrize("alpha", [0.0, 0.5, 0.9, 1.0])
    def test_finite_differences(self, alpha):
        ae, data = tiny_autoencoder()
        assert ae.n_theta <= 200
        X = data[:4]
        g = grad_total(ae, X, alpha)
        fd = central_difference_grad(lambda th: loss_total(ae, X, alpha, th), ae.theta)
        assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(fd)

    def test_zero_at_global_minimum(self, rng):
        V = symplectic_embedding(4, 1)
        ae = linear_autoencoder(V)
        X = rng.standard_normal((3, 2)) @ V.T
        assert np.max(np.abs(grad_total(ae, X, 0.5))) <= 1e-10

import numpy as np
import pytest

from vimlab import tensor as T
from vimlab.checkpoint import load_checkpoint, load_into, save_checkpoint
from vimlab.errors import CheckpointError, DimensionError
from vimlab.model import LOGVAR_MIN, StochasticClassifier, sample_latent
from vimlab.tensor import Tensor

from _util import numeric_grad, onehot_model, rel_err, tiny_model


def test_default_architecture_widths():
    m = StochasticClassifier(latent_dim=256, seed=0)
    shapes = [p.shape for p in m.parameters()]
    assert shapes == [(784, 1024), (1024,), (1024, 1024), (1024,), (1024, 512), (512,), (256, 10), (10,)]


def test_changing_latent_dim_only_touches_last_layer_and_decoder():
    a = [p.shape for p in StochasticClassifier(latent_dim=2, seed=0).parameters()]
    b = [p.shape for p in StochasticClassifier(latent_dim=7, seed=0).parameters()]
    assert a[:4] == b[:4]
    assert a[4:] != b[4:]


def test_glorot_init_bounds_and_zero_bias():
    m = tiny_model(seed=3, input_dim=30, hidden=(20,), latent_dim=4)
    W, b = m.encoder[0]
    assert np.abs(W.data).max() <= np.sqrt(6 / 50)
    assert not b.data.any()


def test_zero_weights_give_zero_latent():
    m = tiny_model()
    for p in m.parameters():
        p.data[:] = 0
    mu, logvar = m.encode(Tensor(np.random.default_rng(0).random((5, 6))))
    assert not mu.data.any() and not logvar.data.any()


def test_identical_rows_identical_latents():
    m = tiny_model(seed=1)
    x = np.tile(np.random.default_rng(1).random(6), (4, 1))
    mu, logvar = m.encode(Tensor(x))
    assert (mu.data == mu.data[0]).all() and (logvar.data == logvar.data[0]).all()


def test_encode_wrong_width():
    with pytest.raises(DimensionError):
        tiny_model().encode(Tensor(np.zeros((2, 5))))


def test_logvar_is_clamped():
    m = tiny_model()
    m.encoder[-1][1].data[m.latent_dim:] = 1e3
    _, logvar = m.encode(Tensor(np.zeros((1, 6))))
    assert logvar.data.max() == 10.0
    m.encoder[-1][1].data[m.latent_dim:] = -1e3
    _, logvar = m.encode(Tensor(np.zeros((1, 6))))
    assert logvar.data.min() == -10.0


def test_encoder_gradient_of_sum_mu():
    r = np.random.default_rng(5)
    for seed in range(5):
        m = tiny_model(seed)
        m.encoder[0][1].data += 0.1
        x = r.random((8, 6))
        W0 = m.encoder[0][0]
        T.sum(m.encode(Tensor(x))[0]).backward()
        (num,) = numeric_grad(lambda: float(m.encode(Tensor(x))[0].data.sum()), [W0.data])
        assert rel_err(W0.grad, num) <= 1e-4
        T.zero_grad(m.parameters())


# -- sampling -----------------------------------------------------------------


def test_eps_zero_gives_mu():
    mu = Tensor(np.random.default_rng(0).standard_normal((3, 4)))
    z = sample_latent(mu, Tensor(np.ones((3, 4))), np.zeros((3, 4)))
    assert np.array_equal(z.data, mu.data)


def test_floor_logvar_nearly_deterministic():
    r = np.random.default_rng(2)
    mu = Tensor(r.standard_normal((5, 3)))
    eps = r.standard_normal((5, 3))
    z = sample_latent(mu, Tensor(np.full((5, 3), LOGVAR_MIN)), eps)
    assert np.abs(z.data - mu.data).max() <= np.exp(-5) * np.abs(eps).max() + 1e-15


def test_standard_normal_moments():
    n, k = 100_000, 4
    eps = np.random.default_rng(11).standard_normal((n, k))
    z = sample_latent(Tensor(np.zeros((n, k))), Tensor(np.zeros((n, k))), eps).data
    se_mean = 1 / np.sqrt(n)
    se_var = np.sqrt(2 / n)
    assert np.all(np.abs(z.mean(0)) <= 3 * se_mean)
    assert np.all(np.abs(z.var(0) - 1) <= 3 * se_var)


def test_gradients_reach_mu_and_logvar_not_eps():
    mu = Tensor(np.ones((2, 2)), requires_grad=True)
    lv = Tensor(np.zeros((2, 2)), requires_grad=True)
    eps = np.array([[1.0, -2.0], [0.5, 0.0]])
    T.sum(sample_latent(mu, lv, eps)).backward()
    assert np.array_equal(mu.grad, np.ones((2, 2)))
    np.testing.assert_allclose(lv.grad, 0.5 * eps)


def test_recompute_z_bitwise():
    m = tiny_model(seed=4)
    r = np.random.default_rng(4)
    latent, _ = m.forward(Tensor(r.random((7, 6))), r.standard_normal((7, 3)))
    assert latent.recompute_z().tobytes() == latent.z.data.tobytes()


# -- decoder and prediction ----------------------------------------------------


def test_zero_decoder_is_uniform_and_predicts_class_zero():
    m = tiny_model()
    m.dec_W.data[:] = 0
    m.dec_b.data[:] = 0
    pred, probs = m.predict(np.random.default_rng(0).random((5, 6)))
    np.testing.assert_allclose(probs, 0.25)
    assert not pred.any()


def test_identity_decoder_argmax_of_z():
    m = tiny_model(latent_dim=4, n_classes=4)
    m.dec_W.data[:] = np.eye(4)
    m.dec_b.data[:] = 0
    z = np.random.default_rng(0).standard_normal((10, 4))
    assert np.array_equal(np.argmax(m.decode(Tensor(z)).data, 1), np.argmax(z, 1))


def test_decoder_gradient():
    for seed in range(5):
        m = tiny_model(seed)
        z = np.random.default_rng(seed).standard_normal((4, 3))
        zt = Tensor(z.copy(), requires_grad=True)
        w = np.random.default_rng(seed + 100).standard_normal((4, 4))
        T.sum(T.mul(m.decode(zt), Tensor(w))).backward()
        num = numeric_grad(lambda: float((m.decode(Tensor(z)).data * w).sum()), [z, m.dec_W.data])
        assert rel_err(zt.grad, num[0]) <= 1e-6
        assert rel_err(m.dec_W.grad, num[1]) <= 1e-6
        T.zero_grad(m.parameters())


def test_predict_ties_go_to_lowest_index():
    m = onehot_model(3, 3, W=np.zeros((3, 3)), b=np.array([0.0, 2.0, 2.0]))
    pred, _ = m.predict(np.zeros((2, 3)))
    assert list(pred) == [1, 1]


def test_predict_is_deterministic():
    m = tiny_model(seed=6)
    x = np.random.default_rng(6).random((9, 6))
    a, pa = m.predict(x)
    b, pb = m.predict(x)
    assert np.array_equal(a, b) and pa.tobytes() == pb.tobytes()


def test_sampled_prediction_needs_rng_and_averages():
    m = tiny_model(seed=7)
    x = np.random.default_rng(7).random((3, 6))
    with pytest.raises(ValueError):
        m.predict(x, samples=4)
    _, probs = m.predict(x, samples=4, rng=np.random.default_rng(0))
    np.testing.assert_allclose(probs.sum(1), 1.0)


def test_predict_batches_consistently():
    m = tiny_model(seed=8)
    x = np.random.default_rng(8).random((25, 6))
    _, full = m.predict(x)
    _, chunked = m.predict(x, batch_size=4)
    np.testing.assert_allclose(full, chunked, rtol=0, atol=1e-15)


# -- checkpoint -----------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    m = tiny_model(seed=9)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, m, seed=9, objective={"variant": "vim"})
    loaded, header = load_checkpoint(path)
    assert header["meta"]["seed"] == 9
    for (n1, p1), (n2, p2) in zip(m.params, loaded.params):
        assert n1 == n2 and p1.data.tobytes() == p2.data.tobytes()


def test_checkpoint_shape_mismatch(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, tiny_model(latent_dim=3))
    with pytest.raises(CheckpointError):
        load_into(tiny_model(latent_dim=2), path)


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)

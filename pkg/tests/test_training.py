"""
Tests sampling, the Huber loss, backpropagation, Adam and the trainer
"""

import numpy as np
import pytest
from numpy import testing

from niftrace.exceptions import ConfigurationError, DivergenceError, DomainError
from niftrace.images import HdrImage
from niftrace.nif.colour import tone_compress
from niftrace.nif.network import NifConfig, NifWeights, fourier_encode_batch
from niftrace.studies import synthetic_hdri
from niftrace.training import backprop, losses, sampling
from niftrace.training.adam import AdamState, adam_step
from niftrace.training.trainer import TRACE_COLUMNS, TrainConfig, Trainer, train

gradient = np.linspace(0, 1, 4 * 2 * 3, dtype=np.float32).reshape(2, 4, 3)
small = NifConfig(hidden=16, layers=3, fourier_dim=8)


def sky(width=16, height=8):
    u = (np.arange(width) + 0.5) / width
    v = (np.arange(height) + 0.5) / height
    base = 0.5 + 0.4 * np.sin(2 * np.pi * u)[None, :, None] * (1 - v)[:, None, None]
    return HdrImage((base * np.array([1.0, 0.8, 0.6])).astype(np.float32))


def test_bilinear_at_centres():
    uv = sampling.eval_grid(4, 2)
    out = sampling.bilinear(gradient, uv[:, 0], uv[:, 1])
    testing.assert_allclose(out, gradient.reshape(-1, 3), rtol=1e-6)


def test_bilinear_midway():
    out = sampling.bilinear(gradient, [2.0 / 4], [0.25])
    testing.assert_allclose(out[0], 0.5 * (gradient[0, 1] + gradient[0, 2]), rtol=1e-6)


def test_bilinear_wraps_horizontally():
    out = sampling.bilinear(gradient, [0.0], [0.25])
    testing.assert_allclose(out[0], 0.5 * (gradient[0, 0] + gradient[0, 3]), rtol=1e-6)


def test_bilinear_clamps_vertically():
    out = sampling.bilinear(gradient, [0.125, 0.125], [0.0, 0.999999])
    testing.assert_allclose(out[0], gradient[0, 0], rtol=1e-6)
    testing.assert_allclose(out[1], gradient[1, 0], rtol=1e-5)


def test_sample_batch():
    uv, targets = sampling.sample_batch(HdrImage(gradient), 100, np.random.default_rng(0))
    assert uv.shape == (100, 2) and targets.shape == (100, 3)
    assert np.all((uv >= 0) & (uv < 1))
    testing.assert_allclose(targets, tone_compress(sampling.bilinear(gradient, uv[:, 0], uv[:, 1])))


def test_resample_identity():
    testing.assert_array_equal(sampling.resample(gradient, 4, 2), gradient)
    assert sampling.resample(gradient, 8, 4).shape == (4, 8, 3)


def test_huber_values():
    assert losses.huber(0.0, 0.0, 1e-3) == 0
    testing.assert_allclose(losses.huber(0.0005, 0.0, 1e-3), 1.25e-7)
    testing.assert_allclose(losses.huber(0.01, 0.0, 1e-3), 9.5e-6)
    testing.assert_allclose(losses.huber(-0.01, 0.0, 1e-3), 9.5e-6)
    testing.assert_array_equal(losses.huber_grad(np.array([0.0005, 0.01, -0.01]), 0.0, 1e-3),
                               [0.0005, 0.001, -0.001])
    with pytest.raises(DomainError):
        losses.huber(0.0, 0.0, 0.0)


def test_huber_mean_gradient_scale():
    pred = np.full((4, 3), 0.5, dtype=np.float32)
    loss, grad = losses.huber_mean(pred, np.zeros_like(pred), 1e-3)
    testing.assert_allclose(loss, 1e-3 * (0.5 - 0.5e-3), rtol=1e-6)
    testing.assert_allclose(grad, 1e-3 / 12, rtol=1e-6)
    assert grad.dtype == np.float32


def test_zero_error_gives_zero_gradients():
    weights = NifWeights.he_uniform(small, np.random.default_rng(0))
    uv = np.random.default_rng(1).random((32, 2)).astype(np.float32)
    cache = backprop.forward(weights, small, fourier_encode_batch(uv, small.fourier_dim))
    grads = backprop.backward(weights, small, uv, cache.prediction, delta=1e-3)
    for g in grads.parameters():
        testing.assert_array_equal(g, 0)


@pytest.mark.parametrize("config", [NifConfig(hidden=16, layers=3, fourier_dim=8),
                                    NifConfig(hidden=16, layers=6, fourier_dim=8, colour_matrix="ycocg_to_rgb")])
def test_gradients_match_finite_differences(config):
    rng = np.random.default_rng(2)
    weights = NifWeights.he_uniform(config, rng).copy(np.float64)
    weights.biases = [b + 0.1 for b in weights.biases]
    uv = rng.random((24, 2))
    enc = fourier_encode_batch(uv, config.fourier_dim).astype(np.float64)
    targets = rng.random((24, 3))
    delta = 0.05

    _, grads = backprop.loss_and_gradients(weights, config, uv, targets, delta, encoding=enc)
    h = 1e-6
    for k, param in enumerate(weights.parameters()):
        for idx in [tuple(rng.integers(0, s) for s in param.shape) for _ in range(4)]:
            saved = param[idx]
            param[idx] = saved + h
            up, _ = backprop.loss_and_gradients(weights, config, uv, targets, delta, encoding=enc)
            param[idx] = saved - h
            down, _ = backprop.loss_and_gradients(weights, config, uv, targets, delta, encoding=enc)
            param[idx] = saved
            numeric = (up - down) / (2 * h)
            testing.assert_allclose(grads.parameters()[k][idx], numeric, rtol=1e-4, atol=1e-9)


def test_loss_scale_multiplies_gradients():
    weights = NifWeights.he_uniform(small, np.random.default_rng(0))
    uv = np.random.default_rng(1).random((32, 2)).astype(np.float32)
    targets = np.full((32, 3), 0.3, dtype=np.float32)
    _, plain = backprop.loss_and_gradients(weights, small, uv, targets, 1e-3)
    _, scaled = backprop.loss_and_gradients(weights, small, uv, targets, 1e-3, loss_scale=1024.0)
    for a, b in zip(plain.parameters(), scaled.parameters()):
        testing.assert_allclose(b, 1024.0 * a, rtol=1e-5, atol=1e-12)


def reference_adam(p, g, m, v, t, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    p = p - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return p, m, v


def test_adam_matches_reference():
    rng = np.random.default_rng(4)
    params = [rng.normal(size=(5, 3)).astype(np.float32), rng.normal(size=3).astype(np.float32)]
    state = AdamState.zeros_like(params)
    ref = [(p.astype(np.float64), np.zeros(p.shape), np.zeros(p.shape)) for p in params]
    for t in range(1, 6):
        grads = [rng.normal(size=p.shape).astype(np.float32) for p in params]
        params, state, accepted = adam_step(params, grads, state, lr=0.01)
        assert accepted and state.t == t
        ref = [reference_adam(p, g.astype(np.float64), m, v, t, 0.01) for (p, m, v), g in zip(ref, grads)]
        for p, (rp, _, _) in zip(params, ref):
            assert p.dtype == np.float32
            testing.assert_allclose(p, rp, rtol=1e-5, atol=1e-6)


def test_adam_zero_gradient():
    params = [np.ones((2, 2), dtype=np.float32)]
    new, state, accepted = adam_step(params, [np.zeros((2, 2), np.float32)], AdamState.zeros_like(params))
    assert accepted
    testing.assert_array_equal(new[0], params[0])


def test_adam_grad_scale():
    params = [np.ones(4, dtype=np.float32)]
    g = np.array([0.1, -0.2, 0.3, 0.0], dtype=np.float32)
    a, _, _ = adam_step(params, [g], AdamState.zeros_like(params), lr=0.01)
    b, _, _ = adam_step(params, [g * 1024], AdamState.zeros_like(params), lr=0.01, grad_scale=1024.0)
    testing.assert_allclose(a[0], b[0], rtol=1e-6)


def test_adam_rejects_non_finite():
    params = [np.ones(3, dtype=np.float32)]
    state = AdamState.zeros_like(params)
    new, new_state, accepted = adam_step(params, [np.array([1, np.nan, 0], np.float32)], state)
    assert not accepted
    assert new is params and new_state is state


def test_adam_stochastic_rounding():
    params = [np.random.default_rng(0).normal(size=50).astype(np.float32)]
    grads = [np.random.default_rng(1).normal(size=50).astype(np.float32)]
    new, _, _ = adam_step(params, grads, AdamState.zeros_like(params), stochastic_rng=np.random.default_rng(2))
    testing.assert_array_equal(new[0].astype(np.float16).astype(np.float32), new[0])


def test_adam_shape_mismatch():
    params = [np.ones(3, dtype=np.float32)]
    with pytest.raises(ConfigurationError):
        adam_step(params, [np.ones(4, np.float32)], AdamState.zeros_like(params))


def test_train_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(steps=10, eval_interval=20)
    with pytest.raises(ConfigurationError):
        TrainConfig(master_precision="bf16")
    assert TrainConfig.from_json(TrainConfig(steps=5, eval_interval=5).to_json()).steps == 5


def quick_config(**kwargs):
    return TrainConfig(**{"batch_size": 64, "steps": 20, "eval_interval": 10, "learning_rate": 5e-3, **kwargs})


def test_zero_steps():
    trainer = Trainer(sky(), small, quick_config(steps=0))
    initial = trainer.weights
    weights, trace = trainer.run()
    assert weights is initial
    assert len(trace) == 0
    assert list(trace.columns) == TRACE_COLUMNS


def test_trace_rows():
    weights, trace = train(sky(), small, quick_config())
    testing.assert_array_equal(trace["step"], [10, 20])
    assert np.all(np.isfinite(trace["psnr_rgb"]))


def test_training_is_deterministic():
    a, trace_a = train(sky(), small, quick_config(seed=3))
    b, trace_b = train(sky(), small, quick_config(seed=3))
    for x, y in zip(a.parameters(), b.parameters()):
        testing.assert_array_equal(x, y)
    testing.assert_array_equal(trace_a.values, trace_b.values)
    c, _ = train(sky(), small, quick_config(seed=4))
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_training_reduces_loss():
    trainer = Trainer(sky(), small, quick_config(steps=200, eval_interval=100))
    trainer.run()
    assert np.mean(trainer.loss_hist[-20:]) < np.mean(trainer.loss_hist[:20])
    assert trainer.evaluate().psnr_rgb > trainer.initial_report.psnr_rgb


def test_stochastic_master_weights_stay_on_f16_lattice():
    trainer = Trainer(sky(), small, quick_config(master_precision="f16_stochastic"))
    weights, _ = trainer.run()
    for p in weights.parameters():
        testing.assert_array_equal(p.astype(np.float16).astype(np.float32), p)


def test_divergence_aborts():
    weights = NifWeights.zeros(small)
    weights.biases[-1][:] = np.inf
    trainer = Trainer(sky(), small, quick_config(), weights=weights)
    with pytest.raises(DivergenceError) as err:
        trainer.step()
    assert err.value.step == 0


def test_mismatched_start_weights():
    with pytest.raises(ConfigurationError):
        Trainer(sky(), small, quick_config(), weights=NifWeights.zeros(NifConfig(hidden=32, layers=3, fourier_dim=8)))


@pytest.mark.slow
def test_constant_image_fit():
    image = HdrImage.constant(64, 32, (0.5, 0.5, 0.5))
    trainer = Trainer(image, NifConfig(hidden=64, layers=2, fourier_dim=40),
                      TrainConfig(steps=2000, eval_interval=500, batch_size=4096))
    trainer.run()
    assert trainer.evaluate().psnr_rgb >= 60


@pytest.mark.slow
def test_sunlit_panorama_fit_improves_psnr():
    image = synthetic_hdri("sunlit", 256, 128)
    trainer = Trainer(image, NifConfig(hidden=64, layers=2, fourier_dim=40),
                      TrainConfig(steps=20000, eval_interval=5000, batch_size=4096, seed=0))
    _, trace = trainer.run()
    assert list(trace["step"]) == [5000, 10000, 15000, 20000]
    assert trace["psnr_rgb"].iloc[-1] - trainer.initial_report.psnr_rgb >= 15

from __future__ import annotations

import math

import numpy as np
import pytest

from src.diffusion import (
    DenoiserConfig,
    DenoiserNet,
    GaussianParams,
    ddpm_sample,
    fit_denoiser,
    forward_diffuse,
    gaussian_log_density,
    make_schedule,
    model_reverse_params,
    posterior_params,
    pretrain_loss,
    pretrain_loss_node,
)
from src.diffusion.schedule import NoiseSchedule, window_bounds
from src.numerics import CompGraph, grad_check
from src.utils.errors import ArgumentError


class _OracleNet:
    """Stands in for a DenoiserNet whose prediction is a fixed array."""

    def __init__(self, eps):
        self.eps = eps

    def predict(self, x_t, t, c):
        return self.eps


def test_default_schedule_first_step():
    sched = make_schedule(1000, 1e-4, 0.02)
    assert sched.alpha_bar_t(1) == pytest.approx(0.9999, abs=1e-15)
    assert sched.alpha_bar_t(1000) < sched.alpha_bar_t(1)
    assert np.all(np.diff(sched.alpha_bar) < 0)
    assert np.all((sched.alpha_bar > 0) & (sched.alpha_bar < 1))


def test_two_step_schedule_by_hand():
    sched = make_schedule(2, 0.1, 0.1)
    np.testing.assert_allclose(sched.alpha_bar, [0.9, 0.81], atol=1e-12)
    assert float(sched.alpha_bar_prev(1)) == 1.0
    assert float(sched.alpha_bar_prev(2)) == pytest.approx(0.9)


def test_alpha_bar_is_running_product():
    sched = make_schedule(50, 1e-3, 0.3)
    for t in (1, 7, 50):
        assert float(sched.alpha_bar_t(t)) == pytest.approx(float(np.prod(sched.alpha[:t])), abs=1e-12)


@pytest.mark.parametrize("args", [(1, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 1e-4, 1.0)])
def test_make_schedule_bounds(args):
    with pytest.raises(ArgumentError):
        make_schedule(*args)


def test_timesteps_out_of_range_raise(short_schedule):
    with pytest.raises(ArgumentError):
        short_schedule.beta_t(0)
    with pytest.raises(ArgumentError):
        short_schedule.beta_t(short_schedule.T + 1)
    with pytest.raises(ArgumentError):
        short_schedule.steps(1, lo=2)


def test_window_bounds():
    sched = make_schedule(1000)
    assert window_bounds(sched, 0.5, 0.6) == (500, 600)
    assert window_bounds(sched, 0.0, 1.0) == (1, 1000)


def test_forward_diffuse_zero_noise(short_schedule, rng):
    x0 = rng.normal(size=(4, 2))
    out = forward_diffuse(x0, 5, np.zeros_like(x0), short_schedule)
    np.testing.assert_allclose(out, math.sqrt(float(short_schedule.alpha_bar_t(5))) * x0)


def test_forward_diffuse_per_row_timesteps(short_schedule, rng):
    x0 = rng.normal(size=(3, 2))
    eps = rng.normal(size=(3, 2))
    t = np.array([1, 10, 20])
    batched = forward_diffuse(x0, t, eps, short_schedule)
    for i in range(3):
        np.testing.assert_allclose(batched[i], forward_diffuse(x0[i], int(t[i]), eps[i], short_schedule))


def test_forward_diffuse_shape_mismatch(short_schedule):
    with pytest.raises(ArgumentError):
        forward_diffuse(np.zeros((2, 2)), 3, np.zeros((2, 3)), short_schedule)


def test_forward_diffuse_variance_monte_carlo():
    sched = make_schedule(1000)
    rng = np.random.default_rng(0)
    eps = rng.standard_normal((100_000, 1))
    x_t = forward_diffuse(np.zeros_like(eps), 1000, eps, sched)
    assert np.var(x_t) == pytest.approx(1.0 - float(sched.alpha_bar_t(1000)), rel=0.02)


def test_posterior_two_step_by_hand():
    sched = make_schedule(2, 0.1, 0.1)
    g = posterior_params(np.array([1.0]), np.array([1.0]), 2, sched)
    # mean = (sqrt(0.9)*0.1 + sqrt(0.9)*0.1) / 0.19, variance = 0.1*0.1/0.19
    np.testing.assert_allclose(g.mean, [2 * math.sqrt(0.9) * 0.1 / 0.19], rtol=1e-12)
    assert g.variance == pytest.approx(0.01 / 0.19, rel=1e-12)


def test_posterior_zero_inputs_and_variance_bound(short_schedule):
    g = posterior_params(np.zeros(2), np.zeros(2), 7, short_schedule)
    np.testing.assert_array_equal(g.mean, np.zeros(2))
    for t in range(2, short_schedule.T + 1):
        assert short_schedule.posterior_variance(t) < short_schedule.beta_t(t)


def test_posterior_t1_is_floored(short_schedule):
    g = posterior_params(np.ones(2), np.ones(2), 1, short_schedule)
    assert g.variance == 1e-12
    np.testing.assert_allclose(g.mean, np.ones(2))


def test_zero_prediction_reverse_mean(short_schedule, tiny_config, rng):
    net = DenoiserNet.initialize(tiny_config, rng)  # zero-initialised output layer
    x_t = rng.normal(size=(5, 2))
    g = model_reverse_params(net, x_t, 9, 1, short_schedule)
    np.testing.assert_allclose(g.mean, x_t / math.sqrt(float(short_schedule.alpha_t(9))))
    assert g.variance == float(short_schedule.posterior_variance(9))


def test_exact_eps_reverse_mean_equals_posterior_mean(short_schedule, rng):
    x0 = rng.normal(size=(6, 2))
    eps = rng.normal(size=(6, 2))
    for t in (2, 10, 20):
        x_t = forward_diffuse(x0, t, eps, short_schedule)
        model = model_reverse_params(_OracleNet(eps), x_t, t, 0, short_schedule)
        post = posterior_params(x0, x_t, t, short_schedule)
        np.testing.assert_allclose(model.mean, post.mean, atol=1e-10)
        assert model.variance == post.variance


def test_log_density_hand_values():
    assert gaussian_log_density(np.zeros(1), GaussianParams(np.zeros(1), 1.0)) == pytest.approx(-0.9189385332046727)
    assert gaussian_log_density(np.full(1, 3.0), GaussianParams(np.full(1, 3.0), 2.5)) == pytest.approx(
        -0.5 * math.log(2 * math.pi * 2.5)
    )
    assert gaussian_log_density(np.ones(1), GaussianParams(np.zeros(1), 4.0)) == pytest.approx(
        -0.5 * math.log(8 * math.pi) - 1.0 / 8.0
    )


def test_log_density_peaks_at_mean(rng):
    mean = rng.normal(size=3)
    g = GaussianParams(mean, 0.7)
    best = gaussian_log_density(mean, g)
    for _ in range(20):
        assert gaussian_log_density(mean + rng.normal(scale=0.1, size=3), g) < best


def test_log_density_rejects_nonpositive_variance():
    with pytest.raises(ArgumentError):
        gaussian_log_density(np.zeros(2), GaussianParams(np.zeros(2), 0.0))


def test_log_density_per_row_variance(rng):
    x = rng.normal(size=(2, 3))
    mean = rng.normal(size=(2, 3))
    var = np.array([0.5, 2.0])
    batched = gaussian_log_density(x, GaussianParams(mean, var))
    for i in range(2):
        assert batched[i] == pytest.approx(gaussian_log_density(x[i], GaussianParams(mean[i], float(var[i]))))


def test_denoiser_output_shape_and_determinism(tiny_net, rng):
    x = rng.normal(size=(4, 2))
    out = tiny_net.predict(x, 3, [0, 1, 2, 0])
    assert out.shape == x.shape
    np.testing.assert_array_equal(out, tiny_net.predict(x, 3, [0, 1, 2, 0]))
    assert tiny_net.predict(x[0], 3, 0).shape == (2,)


def test_denoiser_rejects_unknown_condition(tiny_net):
    with pytest.raises(ArgumentError):
        tiny_net.predict(np.zeros((1, 2)), 1, 3)


def test_checkpoint_round_trip(tiny_net, tmp_path):
    path = tmp_path / "checkpoint.txt"
    tiny_net.save(path)
    loaded = DenoiserNet.load(path)
    assert loaded.config == tiny_net.config
    assert loaded.fingerprint() == tiny_net.fingerprint()
    assert path.read_text().splitlines()[0] == "sdpo-lab-denoiser v1"


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a checkpoint\n")
    with pytest.raises(ArgumentError):
        DenoiserNet.load(path)


def test_single_step_sampler_with_zero_prediction():
    sched = NoiseSchedule.from_betas([0.3, 0.3])
    net = DenoiserNet.initialize(DenoiserConfig(dim=2, hidden=4, depth=1, n_conditions=1), np.random.default_rng(0))
    x_T = np.array([[1.0, -2.0]])
    out = ddpm_sample(net, 0, sched, np.random.default_rng(0), x_T=x_T)
    # t=2 step adds noise, t=1 step is the noiseless mean x/sqrt(alpha_1)
    assert out.shape == (1, 2)
    rng = np.random.default_rng(0)
    x1 = x_T / math.sqrt(0.7) + math.sqrt(float(sched.posterior_variance(2))) * rng.standard_normal((1, 2))
    np.testing.assert_allclose(out, x1 / math.sqrt(0.7))


def test_sampler_is_seed_deterministic(tiny_net, short_schedule):
    a = ddpm_sample(tiny_net, 1, short_schedule, np.random.default_rng(3), n=5)
    b = ddpm_sample(tiny_net, 1, short_schedule, np.random.default_rng(3), n=5)
    np.testing.assert_array_equal(a, b)


def test_pretrain_loss_zero_prediction_is_dim():
    sched = make_schedule(100)
    net = DenoiserNet.initialize(DenoiserConfig(dim=2, n_conditions=1), np.random.default_rng(0))
    x0 = np.random.default_rng(1).normal(size=(20_000, 2))
    assert pretrain_loss(net, x0, 0, sched, np.random.default_rng(2)) == pytest.approx(2.0, rel=0.05)


def test_pretrain_loss_gradients(tiny_net, short_schedule, rng):
    x_t = rng.normal(size=(4, 2))
    t = np.array([1, 5, 9, 20])
    c = np.array([0, 1, 2, 1])
    eps = rng.normal(size=(4, 2))

    def build(graph: CompGraph, params):
        nodes = {k: graph.param(k, v) for k, v in params.items()}
        return pretrain_loss_node(graph, tiny_net, nodes, x_t, t, c, eps)

    report = grad_check(build, tiny_net.params, rtol=1e-4)
    assert report.passed, report


def test_fit_denoiser_reduces_loss():
    sched = make_schedule(100)
    cfg = DenoiserConfig(dim=1, hidden=32, depth=2, n_conditions=1)
    net = DenoiserNet.initialize(cfg, np.random.default_rng(0))

    def source(n, rng):
        return 2.0 + 0.1 * rng.standard_normal((n, 1)), np.zeros(n, dtype=np.int64)

    _, history = fit_denoiser(net, source, sched, steps=600, batch_size=64, lr=3e-3, rng=np.random.default_rng(1))
    assert len(history) == 600
    assert np.mean(history[-100:]) < np.mean(history[:100])


@pytest.mark.slow
def test_trained_sampler_recovers_target_mean():
    sched = make_schedule(200)
    cfg = DenoiserConfig(dim=1, hidden=48, depth=2, n_conditions=1)
    net = DenoiserNet.initialize(cfg, np.random.default_rng(0))

    def source(n, rng):
        return 1.5 + 0.3 * rng.standard_normal((n, 1)), np.zeros(n, dtype=np.int64)

    net, _ = fit_denoiser(net, source, sched, steps=3000, batch_size=256, lr=2e-3, rng=np.random.default_rng(1))
    x = ddpm_sample(net, 0, sched, np.random.default_rng(2), n=10_000)
    stderr = 0.3 / math.sqrt(10_000)
    assert abs(float(np.mean(x)) - 1.5) < max(3 * stderr, 0.05)

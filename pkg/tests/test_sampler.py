import numpy as np
import pytest

from core.denoiser import PointMass, predict_eps
from core.errors import IncompatibleLatentError, InvalidConfigError
from core.latent import Method
from core.numerics import RngStream, randn
from core.sampler import ddpm_sample, generate_from_latent, mu_from_eps, mu_hat, predicted_x0
from core.schedule import make_linear_schedule, respace


@pytest.mark.parametrize("t", [2, 17, 50, 100])
def test_mu_hat_at_eta_one_is_posterior_mean(toy_model, schedule, rng, t):
    x_t = randn([16, 2], rng)
    x0_hat = predicted_x0(x_t, predict_eps(toy_model, x_t, t, schedule), t, schedule)
    alpha_bar, alpha_bar_prev = schedule.alpha_bar[t], schedule.alpha_bar[t - 1]
    expected = (np.sqrt(alpha_bar_prev) * schedule.beta[t] / (1.0 - alpha_bar) * x0_hat
                + np.sqrt(schedule.alpha[t]) * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * x_t)
    np.testing.assert_allclose(mu_hat(toy_model, x_t, t, schedule), expected, rtol=1e-12, atol=1e-12)


def test_zero_prediction_rescales_state(schedule, rng):
    x_t = randn([5, 3], rng)
    for t in (1, 30, 100):
        ratio = np.sqrt(schedule.alpha_bar[t - 1] / schedule.alpha_bar[t])
        np.testing.assert_allclose(mu_from_eps(x_t, np.zeros_like(x_t), t, schedule), ratio * x_t, rtol=1e-12)


def test_deterministic_sampling_reaches_point_mass(schedule, rng):
    point = np.array([1.5, -3.0, 0.25])
    trajectory = ddpm_sample(PointMass(point), schedule.with_eta(0.0), rng, count=8)
    np.testing.assert_allclose(trajectory.x_0, np.broadcast_to(point, (8, 3)), atol=1e-6)


def test_full_schedule_samples_match_toy_target(toy_model, base_schedule):
    samples = ddpm_sample(toy_model, base_schedule, RngStream(2024), count=2000).x_0
    assert np.all(np.abs(samples.mean(axis=0) - 10.0) < 0.1)
    covariance = np.cov(samples, rowvar=False)
    assert np.all(np.abs(np.diag(covariance) - 1.0) < 0.15)
    assert np.linalg.norm(covariance - np.eye(2)) / np.linalg.norm(np.eye(2)) < 0.1


def test_respaced_samples_keep_toy_mean(toy_model, base_schedule):
    samples = ddpm_sample(toy_model, respace(base_schedule, 40), RngStream(2024), count=2000).x_0
    assert np.all(np.abs(samples.mean(axis=0) - 10.0) < 0.1)
    # few posterior-variance steps under-disperse the target slightly
    variance = samples.var(axis=0)
    assert np.all((variance > 0.7) & (variance < 1.05))


def test_replaying_native_latent_is_bitwise_exact(gmm_model, schedule, rng):
    trajectory = ddpm_sample(gmm_model, schedule, rng, count=32)
    latent = trajectory.to_latent()
    assert latent.method is Method.NATIVE
    assert latent.batch_shape == (32,)
    np.testing.assert_array_equal(generate_from_latent(gmm_model, schedule, latent), trajectory.x_0)


def test_replay_with_zero_final_noise(field_model, schedule, rng):
    quiet = schedule.with_zero_final_noise(True)
    trajectory = ddpm_sample(field_model, quiet, rng)
    assert not np.any(trajectory.noise[0])
    np.testing.assert_array_equal(generate_from_latent(field_model, quiet, trajectory.to_latent()), trajectory.x_0)


def test_deterministic_sampling_ignores_seed(toy_model, schedule):
    deterministic = schedule.with_eta(0.0)
    x_init = randn([4, 2], RngStream(3))
    a = ddpm_sample(toy_model, deterministic, RngStream(1), t_skip=10, x_init=x_init)
    b = ddpm_sample(toy_model, deterministic, RngStream(2), t_skip=10, x_init=x_init)
    np.testing.assert_array_equal(a.x_0, b.x_0)


def test_skipped_trajectory_records_only_visited_states(toy_model, schedule, rng):
    x_init = randn([2], rng)
    trajectory = ddpm_sample(toy_model, schedule, rng, t_skip=30, x_init=x_init)
    assert trajectory.start == 70
    assert trajectory.states[71] is None and trajectory.noise[70] is None
    np.testing.assert_array_equal(trajectory.states[70], x_init)
    with pytest.raises(InvalidConfigError):
        trajectory.to_latent()


@pytest.mark.parametrize("t_skip", [100, 150, -1, 2.5])
def test_ddpm_sample_rejects_bad_skip(toy_model, schedule, rng, t_skip):
    with pytest.raises(InvalidConfigError):
        ddpm_sample(toy_model, schedule, rng, t_skip=t_skip, x_init=np.zeros(2))


def test_skip_needs_initial_state(toy_model, schedule, rng):
    with pytest.raises(InvalidConfigError):
        ddpm_sample(toy_model, schedule, rng, t_skip=5)


def test_generate_rejects_foreign_schedule(toy_model, schedule, rng):
    latent = ddpm_sample(toy_model, schedule, rng).to_latent()
    with pytest.raises(IncompatibleLatentError):
        generate_from_latent(toy_model, make_linear_schedule(100), latent)
    with pytest.raises(IncompatibleLatentError):
        generate_from_latent(toy_model, schedule.with_eta(0.5), latent)


def test_strength_needs_conditional_model(toy_model, schedule, rng):
    with pytest.raises(InvalidConfigError):
        ddpm_sample(toy_model, schedule, rng, strength=2.0)


def test_full_skip_returns_encoded_input(gmm_model, schedule, rng):
    trajectory = ddpm_sample(gmm_model, schedule, rng, count=3)
    out = generate_from_latent(gmm_model, schedule, trajectory.to_latent(), t_skip=schedule.steps)
    np.testing.assert_array_equal(out, trajectory.x_0)
    assert out is not trajectory.x_0


def test_partial_skip_starts_from_chain(gmm_model, schedule, rng):
    trajectory = ddpm_sample(gmm_model, schedule, rng)
    out = generate_from_latent(gmm_model, schedule, trajectory.to_latent(), t_skip=40)
    np.testing.assert_array_equal(out, trajectory.x_0)


def test_conditions_change_the_output(swap_model, schedule, rng):
    latent = ddpm_sample(swap_model, schedule, rng, cond="source").to_latent()
    source = generate_from_latent(swap_model, schedule, latent, cond="source")
    target = generate_from_latent(swap_model, schedule, latent, cond="target")
    assert np.sqrt(np.mean((source - target) ** 2)) > 1.0
    assert target.mean() > source.mean()


def test_guided_sampling_runs(swap_model, schedule, rng):
    trajectory = ddpm_sample(swap_model, schedule, rng, cond="target", strength=3.0, count=4)
    assert trajectory.strength == 3.0
    assert trajectory.x_0.shape == (4, 8, 8)
    assert np.all(np.isfinite(trajectory.x_0))

import numpy as np
import pytest

from core.errors import InvalidConfigError, TimestepError
from core.schedule import (direction_coefficient, make_linear_schedule, noise_scale, respace,
                           schedule_from_config, sigma_of)


def test_single_step_schedule():
    schedule = make_linear_schedule(1, beta_start=1e-4, beta_end=0.02)
    assert schedule.alpha_bar[1] == 1.0 - 1e-4


def test_thousand_step_alpha_bar(base_schedule):
    beta = np.linspace(1e-4, 0.02, 1000)
    assert base_schedule.alpha_bar[1000] == pytest.approx(np.prod(1.0 - beta), rel=1e-12)
    assert base_schedule.alpha_bar[1000] == pytest.approx(4.036e-5, rel=2e-3)


@pytest.mark.parametrize("K", [1000, 100, 37, 1])
def test_alpha_bar_is_running_product(base_schedule, K):
    schedule = respace(base_schedule, K)
    np.testing.assert_allclose(np.cumprod(schedule.alpha), schedule.alpha_bar, rtol=1e-12)
    assert schedule.alpha_bar[0] == 1.0
    assert np.all(np.diff(schedule.alpha_bar) < 0.0)
    assert np.all((schedule.alpha_bar > 0.0) & (schedule.alpha_bar <= 1.0))


def test_eta_zero_has_no_noise():
    schedule = make_linear_schedule(50, eta=0.0)
    assert all(sigma_of(schedule, t) == 0.0 for t in range(1, 51))
    assert all(noise_scale(schedule, t) == 0.0 for t in range(1, 51))


def test_eta_one_sigma_is_posterior_std(schedule):
    t = np.arange(2, schedule.steps + 1)
    expected = schedule.beta[t] * (1.0 - schedule.alpha_bar[t - 1]) / (1.0 - schedule.alpha_bar[t])
    np.testing.assert_allclose(schedule.sigma[t] ** 2, expected, rtol=1e-12)


@pytest.mark.parametrize("eta", [0.0, 0.3, 0.7, 1.0])
def test_direction_coefficient_is_real(base_schedule, eta):
    schedule = base_schedule.with_eta(eta)
    t = np.arange(1, schedule.steps + 1)
    assert np.all(schedule.sigma[t] ** 2 <= 1.0 - schedule.alpha_bar[t - 1])
    coefficients = [direction_coefficient(schedule, step) for step in range(1, schedule.steps + 1)]
    assert np.all(np.isfinite(coefficients))


def test_final_step_noise(schedule):
    assert sigma_of(schedule, 1) == 0.0
    assert noise_scale(schedule, 1) == pytest.approx(np.sqrt(schedule.beta[1]))
    assert noise_scale(schedule.with_zero_final_noise(True), 1) == 0.0
    assert noise_scale(schedule, 2) == sigma_of(schedule, 2)


@pytest.mark.parametrize("t", [0, 101, -3])
def test_timestep_out_of_range(schedule, t):
    with pytest.raises(TimestepError):
        sigma_of(schedule, t)
    with pytest.raises(IndexError):
        noise_scale(schedule, t)


def test_respace_to_full_length_is_identity(base_schedule):
    assert respace(base_schedule, 1000) is base_schedule


def test_respace_keeps_alpha_bar_subsequence(base_schedule, schedule):
    retained = np.arange(10, 1001, 10)
    np.testing.assert_array_equal(schedule.alpha_bar[1:], base_schedule.alpha_bar[retained])
    assert schedule.respacing == tuple(retained)


def test_respace_to_one_step(base_schedule):
    single = respace(base_schedule, 1)
    assert single.steps == 1
    assert single.alpha_bar[1] == base_schedule.alpha_bar[1000]


def test_respace_twice_tracks_base_timesteps(base_schedule):
    twice = respace(respace(base_schedule, 100), 10)
    assert twice.respacing == tuple(range(100, 1001, 100))
    np.testing.assert_array_equal(twice.alpha_bar[1:], base_schedule.alpha_bar[100::100])


@pytest.mark.parametrize("K", [0, 1001, 2.5])
def test_respace_rejects_bad_step_counts(base_schedule, K):
    with pytest.raises(InvalidConfigError):
        respace(base_schedule, K)


@pytest.mark.parametrize("kwargs", [
    {"T": 0},
    {"T": 10, "beta_start": 0.0},
    {"T": 10, "beta_end": 1.0},
    {"T": 10, "beta_start": 0.03, "beta_end": 0.02},
    {"T": 10, "eta": 1.5},
    {"T": 10, "eta": -0.1},
])
def test_make_linear_schedule_rejects_out_of_range(kwargs):
    with pytest.raises(InvalidConfigError):
        make_linear_schedule(**kwargs)


def test_fingerprint_tracks_alpha_bar_and_eta():
    a = make_linear_schedule(100)
    b = make_linear_schedule(100)
    assert a.fingerprint == b.fingerprint
    assert a.with_eta(0.0).fingerprint != a.fingerprint
    assert a.with_zero_final_noise(True).fingerprint != a.fingerprint
    assert make_linear_schedule(100, beta_end=0.03).fingerprint != a.fingerprint


def test_with_eta_keeps_alpha_bar(schedule):
    deterministic = schedule.with_eta(0.0)
    np.testing.assert_array_equal(deterministic.alpha_bar, schedule.alpha_bar)
    assert deterministic.respacing == schedule.respacing
    assert not np.any(deterministic.sigma)


def test_schedule_arrays_are_read_only(schedule):
    with pytest.raises(ValueError):
        schedule.alpha_bar[3] = 0.5


def test_schedule_from_config(schedule):
    built = schedule_from_config({"steps": 1000, "eta": 1.0, "respacing": 100})
    assert built.fingerprint == schedule.fingerprint
    assert built.to_dict()["fingerprint"] == f"{schedule.fingerprint:016x}"


def test_schedule_from_config_rejects_bad_types():
    with pytest.raises(InvalidConfigError):
        schedule_from_config({"steps": "many"})
    with pytest.raises(InvalidConfigError):
        schedule_from_config({"steps": 10, "respacing": 20})

import numpy as np
import pytest
from scipy.integrate import trapezoid

from core.denoiser import (GMM, Conditional, FullGaussian, IsotropicGaussian, PointMass, StationaryField,
                           build_model, cfg_predict, data_mode, log_marginal, posterior_x0, predict_eps,
                           sample_data)
from core.errors import InvalidModelError, InvalidShapeError, UnknownConditionError
from core.numerics import RngStream, randn
from core.schedule import make_linear_schedule


def _finite_difference_eps(model, x, t, schedule, cond=None):
    """-sqrt(1 - alpha_bar_t) times the central-difference gradient of log p_t"""
    gradient = np.empty_like(x)
    flat = gradient.reshape(-1)
    for index in range(x.size):
        step = 1e-5 * (1.0 + abs(x.flat[index]))
        up, down = x.copy(), x.copy()
        up.flat[index] += step
        down.flat[index] -= step
        flat[index] = (log_marginal(model, up, t, schedule, cond)
                       - log_marginal(model, down, t, schedule, cond)) / (2.0 * step)
    return -np.sqrt(1.0 - schedule.alpha_bar[t]) * gradient


def _models():
    tilted = StationaryField((4, 5), length_scales=(2.0, 1.0), angle=0.4, nugget=0.1, mean=0.5)
    return {
        "isotropic": (IsotropicGaussian([1.0, -2.0, 0.5], 0.7), None),
        "full": (FullGaussian([0.5, -1.0, 2.0], [[2.0, 0.3, 0.1], [0.3, 1.0, -0.2], [0.1, -0.2, 0.5]]), None),
        "gmm": (GMM([0.3, 0.7], [IsotropicGaussian([-2.0, 1.0], 0.5),
                                 FullGaussian([2.0, 0.0], [[1.0, 0.4], [0.4, 0.8]])]), None),
        "field": (tilted, None),
        "point": (PointMass([0.3, -0.7]), None),
        "conditional": (Conditional({"a": IsotropicGaussian([2.0, 2.0], 1.5)},
                                    IsotropicGaussian([0.0, 0.0], 1.0)), "a"),
    }


@pytest.mark.parametrize("name", sorted(_models()))
def test_score_identity(name, schedule):
    model, cond = _models()[name]
    rng = RngStream(31).child(name)
    for t in rng.integers(schedule.steps - 4, size=10) + 5:
        x = 2.0 * randn(model.data_shape, rng)
        expected = _finite_difference_eps(model, x, int(t), schedule, cond)
        np.testing.assert_allclose(predict_eps(model, x, int(t), schedule, cond), expected,
                                   rtol=1e-5, atol=1e-7)


def test_standard_normal_prediction(schedule):
    model = IsotropicGaussian(np.zeros(3), 1.0)
    x = randn([3], RngStream(2))
    for t in (1, 17, 100):
        alpha_bar = schedule.alpha_bar[t]
        np.testing.assert_allclose(predict_eps(model, x, t, schedule), np.sqrt(1.0 - alpha_bar) * x, rtol=1e-14)
        np.testing.assert_allclose(posterior_x0(model, x, t, schedule), np.sqrt(alpha_bar) * x, rtol=1e-12)


def test_single_component_mixture_matches_component(schedule):
    component = FullGaussian([1.0, 2.0], [[1.0, 0.2], [0.2, 0.5]])
    mixture = GMM([1.0], [component])
    x = randn([6, 2], RngStream(3))
    np.testing.assert_array_equal(predict_eps(mixture, x, 40, schedule), predict_eps(component, x, 40, schedule))


def test_posterior_mean_near_data_at_first_step():
    schedule = make_linear_schedule(1000)
    model = IsotropicGaussian(np.zeros(2), 1.0)
    x = np.array([1.5, -0.5])
    assert np.max(np.abs(posterior_x0(model, x, 1, schedule) - x)) <= schedule.beta[1] * 2.0


def test_distant_mixture_component_does_not_contribute(schedule):
    near = IsotropicGaussian([0.0, 0.0], 1.0)
    mixture = GMM([0.5, 0.5], [near, IsotropicGaussian([40.0, 0.0], 1.0)])
    x = np.array([0.5, 0.3])
    np.testing.assert_allclose(posterior_x0(mixture, x, 10, schedule), posterior_x0(near, x, 10, schedule),
                               atol=1e-8)


def test_log_marginal_of_standard_normal(schedule):
    model = IsotropicGaussian(np.zeros(2), 1.0)
    for t in (1, 50, 100):
        assert log_marginal(model, np.zeros(2), t, schedule) == pytest.approx(-np.log(2.0 * np.pi), rel=1e-14)


def test_symmetric_mixture_density(schedule):
    mixture = GMM([0.5, 0.5], [IsotropicGaussian([-3.0], 0.5), IsotropicGaussian([3.0], 0.5)])
    for t in (1, 30, 100):
        offset = np.array([1.3])
        assert log_marginal(mixture, offset, t, schedule) == pytest.approx(
            log_marginal(mixture, -offset, t, schedule), rel=1e-12)


@pytest.mark.parametrize("t", [1, 50, 100])
def test_marginal_density_integrates_to_one(schedule, t):
    mixture = GMM([0.3, 0.7], [IsotropicGaussian([-2.0], 0.5), IsotropicGaussian([3.0], 1.0)])
    grid = np.linspace(-40.0, 40.0, 200_001)
    density = np.exp(log_marginal(mixture, grid[:, None], t, schedule))
    assert trapezoid(density, grid) == pytest.approx(1.0, abs=1e-6)


def _mmse_residuals(model, t, schedule, seed):
    rng = RngStream(seed)
    alpha_bar = schedule.alpha_bar[t]
    x_0 = sample_data(model, rng.child("data"), 100_000)
    eps = randn(x_0.shape, rng.child("eps"))
    x_t = np.sqrt(alpha_bar) * x_0 + np.sqrt(1.0 - alpha_bar) * eps
    analytic = np.sum((eps - predict_eps(model, x_t, t, schedule)) ** 2, axis=1)
    design = np.column_stack([x_t, np.ones(len(x_t))])
    coefficients, *_ = np.linalg.lstsq(design, eps, rcond=None)
    linear = np.sum((eps - design @ coefficients) ** 2, axis=1)
    return analytic, linear


def test_mixture_prediction_beats_linear_regression(gmm_model, schedule):
    analytic, linear = _mmse_residuals(gmm_model, 30, schedule, seed=8)
    stderr = np.std(analytic - linear) / np.sqrt(len(analytic))
    assert analytic.mean() <= linear.mean() + 3.0 * stderr


def test_gaussian_prediction_matches_linear_regression(toy_model, schedule):
    analytic, linear = _mmse_residuals(toy_model, 30, schedule, seed=9)
    stderr = np.std(analytic - linear) / np.sqrt(len(analytic))
    assert abs(analytic.mean() - linear.mean()) <= 3.0 * stderr + 1e-12


def test_field_prediction_is_shift_equivariant(schedule):
    field = StationaryField((6, 8), length_scales=(2.0, 1.2), angle=0.5, nugget=0.05)
    x = randn(field.data_shape, RngStream(4))
    for axis, offset in ((0, 2), (1, 3), (1, -1)):
        np.testing.assert_allclose(predict_eps(field, np.roll(x, offset, axis=axis), 20, schedule),
                                   np.roll(predict_eps(field, x, 20, schedule), offset, axis=axis), atol=1e-10)


def test_axis_aligned_field_is_flip_equivariant(field_model, schedule):
    assert field_model.flip_symmetric
    x = randn(field_model.data_shape, RngStream(5))
    for axis in (0, 1):
        np.testing.assert_allclose(predict_eps(field_model, np.flip(x, axis), 20, schedule),
                                   np.flip(predict_eps(field_model, x, 20, schedule), axis), atol=1e-10)


def test_tilted_field_is_not_flip_equivariant(schedule):
    field = StationaryField((8, 8), length_scales=(4.0, 1.5), angle=np.deg2rad(30.0))
    assert not field.flip_symmetric
    x = randn(field.data_shape, RngStream(6))
    flipped = predict_eps(field, np.flip(x, 1), 20, schedule)
    assert np.max(np.abs(flipped - np.flip(predict_eps(field, x, 20, schedule), 1))) > 1e-3


def test_field_covariance_is_circulant(field_model):
    rows, cols = field_model.data_shape
    covariance = field_model.covariance
    rng = np.random.default_rng(12)
    for _ in range(20):
        r, c, dr, dc = rng.integers(0, rows), rng.integers(0, cols), rng.integers(0, rows), rng.integers(0, cols)
        a = r * cols + c
        b = ((r + dr) % rows) * cols + (c + dc) % cols
        assert covariance[a, b] == pytest.approx(covariance[0, dr * cols + dc], abs=1e-14)


def test_cfg_predict_combinations(swap_model, schedule):
    x = randn([8, 8], RngStream(7))
    conditional = predict_eps(swap_model, x, 50, schedule, "target")
    unconditional = predict_eps(swap_model, x, 50, schedule)
    np.testing.assert_allclose(cfg_predict(swap_model, x, 50, schedule, "target", 1.0), conditional,
                               rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(cfg_predict(swap_model, x, 50, schedule, "target", 0.0), unconditional)
    np.testing.assert_allclose(cfg_predict(swap_model, x, 50, schedule, "target", 2.0),
                               2.0 * conditional - unconditional, rtol=1e-12, atol=1e-12)


def test_cfg_needs_unconditional_member(schedule):
    model = Conditional({"a": IsotropicGaussian([0.0], 1.0)})
    with pytest.raises(InvalidModelError):
        cfg_predict(model, np.zeros(1), 5, schedule, "a", 2.0)
    with pytest.raises(InvalidModelError):
        cfg_predict(IsotropicGaussian([0.0], 1.0), np.zeros(1), 5, schedule, "a", 2.0)


def test_unknown_condition(swap_model, toy_model, schedule):
    with pytest.raises(UnknownConditionError, match="unknown condition 'elsewhere'"):
        predict_eps(swap_model, np.zeros((8, 8)), 5, schedule, "elsewhere")
    with pytest.raises(KeyError):
        predict_eps(toy_model, np.zeros(2), 5, schedule, "source")


def test_shape_mismatch(toy_model, schedule):
    with pytest.raises(InvalidShapeError):
        predict_eps(toy_model, np.zeros(3), 5, schedule)


def test_batched_prediction_matches_single(gmm_model, schedule):
    batch = randn([5, 2], RngStream(13))
    single = np.stack([predict_eps(gmm_model, x, 12, schedule) for x in batch])
    np.testing.assert_allclose(predict_eps(gmm_model, batch, 12, schedule), single, rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("declaration", [
    {"mean": [0.0]},
    {"type": "banana"},
    {"type": "gmm", "weights": [0.6, 0.6],
     "components": [{"type": "isotropic_gaussian", "mean": [0.0]}, {"type": "isotropic_gaussian", "mean": [1.0]}]},
    {"type": "full_gaussian", "mean": [0.0, 0.0], "covariance": [[1.0, 2.0], [2.0, 1.0]]},
    {"type": "isotropic_gaussian", "mean": [0.0], "variance": -1.0},
    {"type": "gmm", "components": [{"type": "point_mass", "point": [0.0]}]},
    {"type": "full_gaussian", "mean": [0.0]},
])
def test_build_model_rejects_bad_declarations(declaration):
    with pytest.raises(InvalidModelError):
        build_model(declaration)


def test_build_model_variants(swap_model):
    field = build_model({"type": "stationary_field", "shape": [4, 6], "length_scale": 2.0, "angle_degrees": 90.0})
    assert isinstance(field, StationaryField) and field.data_shape == (4, 6)
    assert field.length_scales == (2.0, 2.0)
    assert isinstance(swap_model, Conditional)
    assert swap_model.data_shape == (8, 8)
    assert sorted(swap_model.members) == ["source", "target"]
    point = build_model({"type": "point_mass", "point": [1.0, 2.0]})
    np.testing.assert_array_equal(sample_data(point, RngStream(0), 3), [[1.0, 2.0]] * 3)


def test_modes(gmm_model, swap_model, field_model):
    np.testing.assert_array_equal(data_mode(gmm_model), [-4.0, 0.0])
    np.testing.assert_array_equal(data_mode(swap_model, "target"), np.full((8, 8), 2.0))
    np.testing.assert_array_equal(data_mode(field_model), np.zeros((8, 8)))


def test_sample_data_moments(gmm_model):
    samples = sample_data(gmm_model, RngStream(21), 20_000)
    expected = 0.5 * np.array([-4.0, 0.0]) + 0.3 * np.array([4.0, 2.0]) + 0.2 * np.array([0.0, -5.0])
    np.testing.assert_allclose(samples.mean(axis=0), expected, atol=0.1)


def test_sequential_mixture_draws_advance_the_stream(gmm_model):
    rng = RngStream(0)
    draws = np.stack([sample_data(gmm_model, rng) for _ in range(200)])
    assert len({tuple(draw) for draw in draws}) == 200
    expected = 0.5 * np.array([-4.0, 0.0]) + 0.3 * np.array([4.0, 2.0]) + 0.2 * np.array([0.0, -5.0])
    np.testing.assert_allclose(draws.mean(axis=0), expected, atol=0.8)

    replay = RngStream(0)
    np.testing.assert_array_equal(draws[:5], np.stack([sample_data(gmm_model, replay) for _ in range(5)]))

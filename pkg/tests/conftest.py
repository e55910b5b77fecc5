import numpy as np
import pytest

from core.default_config import FIELD_MODEL, GMM2D_MODEL, SWAP_MODEL, TOY2D_MODEL
from core.denoiser import build_model
from core.numerics import RngStream
from core.schedule import make_linear_schedule, respace


@pytest.fixture(scope="session")
def base_schedule():
    return make_linear_schedule(1000)


@pytest.fixture(scope="session")
def schedule(base_schedule):
    """1000-step linear schedule respaced to 100 steps"""
    return respace(base_schedule, 100)


@pytest.fixture(scope="session")
def short_schedule(base_schedule):
    return respace(base_schedule, 20)


@pytest.fixture
def rng():
    return RngStream(1234)


@pytest.fixture(scope="session")
def toy_model():
    return build_model(TOY2D_MODEL)


@pytest.fixture(scope="session")
def gmm_model():
    return build_model(GMM2D_MODEL)


@pytest.fixture(scope="session")
def field_model():
    return build_model({**FIELD_MODEL, "shape": [8, 8]})


@pytest.fixture(scope="session")
def field16_model():
    return build_model({**FIELD_MODEL, "shape": [16, 16]})


@pytest.fixture(scope="session")
def swap_model():
    return build_model(SWAP_MODEL)


def _assert_latents_equal(a, b):
    np.testing.assert_array_equal(a.x_T, b.x_T)
    assert a.steps == b.steps
    for z_a, z_b in zip(a.noise, b.noise):
        np.testing.assert_array_equal(z_a, z_b)
    assert a.has_chain == b.has_chain
    if a.has_chain:
        for x_a, x_b in zip(a.chain, b.chain):
            np.testing.assert_array_equal(x_a, x_b)
    assert (a.method, a.fingerprint, a.data_shape, a.cond, a.strength, a.zero_final_noise) == \
        (b.method, b.fingerprint, b.data_shape, b.cond, b.strength, b.zero_final_noise)


@pytest.fixture
def assert_latents_equal():
    return _assert_latents_equal

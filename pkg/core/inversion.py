# core/inversion.py
"""
Noise-map extraction for a given x_0.

Any chain x_0..x_T yields noise maps consistent with x_0 through
z_t = (x_{t-1} - mu_hat_t(x_t)) / sigma_t. The edit-friendly method builds the
chain from independent noise draws; the CycleDiffusion-style baseline builds it by
posterior sampling; DDIM inversion runs the deterministic update backwards.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from core.denoiser import DenoiserModel
from core.errors import InvalidConfigError, ZeroNoiseError
from core.latent import LatentCode, Method
from core.numerics import RngStream, Tensor, check_finite, randn
from core.sampler import eps_function, mu_from_eps, predicted_x0
from core.schedule import Schedule, noise_scale

logger = logging.getLogger(__name__)


def build_aux_chain(x_0: Tensor, schedule: Schedule, rng: RngStream) -> List[Tensor]:
    """x_t = sqrt(alpha_bar_t) x_0 + sqrt(1 - alpha_bar_t) eps_t with independent eps_t"""
    x_0 = check_finite(np.asarray(x_0, dtype=np.float64), "x_0")
    chain = [x_0]
    for t in range(1, schedule.steps + 1):
        alpha_bar = schedule.alpha_bar[t]
        chain.append(np.sqrt(alpha_bar) * x_0 + np.sqrt(1.0 - alpha_bar) * randn(x_0.shape, rng))
    return chain


def noise_from_chain(chain: Sequence[Tensor], model: DenoiserModel, schedule: Schedule,
                     cond: Optional[str] = None, strength: Optional[float] = None,
                     method: Method = Method.EDIT_FRIENDLY, reproject: bool = True) -> LatentCode:
    """
    Extract consistent noise maps from an auxiliary chain.

    After each extraction the chain state x_{t-1} is replaced by
    mu_hat_t(x_t) + sigma_t z_t so rounding errors do not accumulate.
    ``reproject=False`` disables that and exists for error-accumulation checks.
    """
    T = schedule.steps
    if len(chain) != T + 1:
        raise InvalidConfigError(f"chain needs {T + 1} states, got {len(chain)}")
    model.batch_shape(chain[0])
    last = 2 if schedule.zero_final_noise else 1
    for t in range(last, T + 1):
        if noise_scale(schedule, t) == 0.0:
            raise ZeroNoiseError(
                f"noise scale is zero at t={t} (eta={schedule.eta}); noise maps cannot be "
                f"extracted, use ddim_invert for deterministic schedules", {"t": t})

    x_0 = np.asarray(chain[0], dtype=np.float64)
    states = [np.asarray(state, dtype=np.float64) for state in chain]
    noise: List[Optional[Tensor]] = [None] * T
    f = eps_function(model, schedule, cond, strength)

    for t in range(T, 0, -1):
        if t < last:
            noise[t - 1] = np.zeros_like(x_0)
            continue
        scale = noise_scale(schedule, t)
        mu = mu_from_eps(states[t], f(states[t], t), t, schedule)
        z = (states[t - 1] - mu) / scale
        check_finite(z, "extracted noise", t=t, method=Method(method).value)
        noise[t - 1] = z
        if reproject:
            states[t - 1] = mu + scale * z

    # the stored chain keeps the exact input at t=0
    states[0] = x_0
    return LatentCode(
        x_T=states[T],
        noise=tuple(noise),
        method=method,
        fingerprint=schedule.fingerprint,
        data_shape=model.data_shape,
        chain=tuple(states),
        cond=cond,
        strength=strength,
        zero_final_noise=schedule.zero_final_noise,
    )


def edit_friendly_invert(x_0: Tensor, model: DenoiserModel, schedule: Schedule, rng: RngStream,
                         cond: Optional[str] = None, strength: Optional[float] = None) -> LatentCode:
    """Edit-friendly DDPM inversion: independent-noise chain, then consistent extraction"""
    chain = build_aux_chain(x_0, schedule, rng)
    latent = noise_from_chain(chain, model, schedule, cond, strength, Method.EDIT_FRIENDLY)
    logger.debug(f"Edit-friendly inversion done: {latent!r}")
    return latent


def cyclediffusion_chain(x_0: Tensor, schedule: Schedule, rng: RngStream) -> List[Tensor]:
    """
    Posterior-sampling chain: x_T ~ N(0, I), then for t = T..1 the true noise
    (x_t - sqrt(alpha_bar_t) x_0) / sqrt(1 - alpha_bar_t) replaces f_t(x_t) in mu_hat
    and x_{t-1} = mu_hat + sigma_t w_t. The chain ends at x_0 exactly.
    """
    x_0 = check_finite(np.asarray(x_0, dtype=np.float64), "x_0")
    T = schedule.steps
    chain: List[Optional[Tensor]] = [None] * (T + 1)
    x = randn(x_0.shape, rng)
    chain[T] = x
    for t in range(T, 1, -1):
        alpha_bar = schedule.alpha_bar[t]
        eps = (x - np.sqrt(alpha_bar) * x_0) / np.sqrt(1.0 - alpha_bar)
        x = mu_from_eps(x, eps, t, schedule) + noise_scale(schedule, t) * randn(x_0.shape, rng)
        chain[t - 1] = x
    chain[0] = x_0
    return chain


def cyclediffusion_invert(x_0: Tensor, model: DenoiserModel, schedule: Schedule, rng: RngStream,
                          cond: Optional[str] = None, strength: Optional[float] = None) -> LatentCode:
    """CycleDiffusion-style inversion; stored maps are re-extracted against the model"""
    chain = cyclediffusion_chain(x_0, schedule, rng)
    return noise_from_chain(chain, model, schedule, cond, strength, Method.CYCLEDIFFUSION)


def ddim_invert(x_0: Tensor, model: DenoiserModel, schedule: Schedule,
                cond: Optional[str] = None, strength: Optional[float] = None) -> LatentCode:
    """
    Approximate deterministic inversion. Each step reuses the step-t prediction at
    the known endpoint x_{t-1}:

        eps = f_t(x_{t-1})
        x_t = sqrt(alpha_bar_t) P_{t-1}(eps) + sqrt(1 - alpha_bar_t) eps

    The latent belongs to the eta=0 version of ``schedule``; all z_t are zero.
    """
    deterministic = schedule.with_eta(0.0)
    x_0 = check_finite(np.asarray(x_0, dtype=np.float64), "x_0")
    model.batch_shape(x_0)
    f = eps_function(model, deterministic, cond, strength)

    chain = [x_0]
    x = x_0
    for t in range(1, deterministic.steps + 1):
        eps = f(x, t)
        x0_hat = predicted_x0(x, eps, t - 1, deterministic)
        x = np.sqrt(deterministic.alpha_bar[t]) * x0_hat + np.sqrt(1.0 - deterministic.alpha_bar[t]) * eps
        chain.append(check_finite(x, "DDIM inversion state", t=t))

    return LatentCode(
        x_T=x,
        noise=tuple(np.zeros_like(x_0) for _ in range(deterministic.steps)),
        method=Method.DDIM,
        fingerprint=deterministic.fingerprint,
        data_shape=model.data_shape,
        chain=tuple(chain),
        cond=cond,
        strength=strength,
        zero_final_noise=deterministic.zero_final_noise,
    )

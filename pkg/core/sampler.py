# core/sampler.py
"""
Reverse (generative) process: x_{t-1} = mu_hat_t(x_t) + sigma_t z_t with

    mu_hat_t(x_t) = sqrt(alpha_bar[t-1]) P(f_t(x_t)) + D(f_t(x_t))
    P(f) = (x_t - sqrt(1 - alpha_bar[t]) f) / sqrt(alpha_bar[t])
    D(f) = sqrt(1 - alpha_bar[t-1] - sigma_t^2) f
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from core.denoiser import Conditional, DenoiserModel, cfg_predict, predict_eps
from core.errors import InvalidConfigError, NumericalError
from core.latent import LatentCode, Method
from core.numerics import RngStream, Tensor, check_finite, randn
from core.schedule import Schedule, direction_coefficient, noise_scale

logger = logging.getLogger(__name__)

EpsFunction = Callable[[Tensor, int], Tensor]


def eps_function(model: DenoiserModel, schedule: Schedule, cond: Optional[str] = None,
                 strength: Optional[float] = None) -> EpsFunction:
    """
    Noise predictor f_t(x_t) used by the reverse process.

    ``strength=None`` means plain conditional prediction; a number selects the
    classifier-free combination and requires a Conditional model.
    """
    if strength is None:
        return lambda x, t: predict_eps(model, x, t, schedule, cond)
    if not isinstance(model, Conditional):
        raise InvalidConfigError("guidance strength is only valid with conditional models")
    return lambda x, t: cfg_predict(model, x, t, schedule, cond, float(strength))


def predicted_x0(x_t: Tensor, eps: Tensor, t: int, schedule: Schedule) -> Tensor:
    """P(f_t(x_t))"""
    alpha_bar = schedule.alpha_bar[t]
    return (x_t - np.sqrt(1.0 - alpha_bar) * eps) / np.sqrt(alpha_bar)


def mu_from_eps(x_t: Tensor, eps: Tensor, t: int, schedule: Schedule) -> Tensor:
    x0_hat = predicted_x0(x_t, eps, t, schedule)
    return np.sqrt(schedule.alpha_bar[t - 1]) * x0_hat + direction_coefficient(schedule, t) * eps


def mu_hat(model: DenoiserModel, x_t: Tensor, t: int, schedule: Schedule,
           cond: Optional[str] = None, strength: Optional[float] = None) -> Tensor:
    t = schedule.check_timestep(t)
    eps = eps_function(model, schedule, cond, strength)(x_t, t)
    return mu_from_eps(x_t, eps, t, schedule)


def reverse_step(x_t: Tensor, eps: Tensor, z: Tensor, t: int, schedule: Schedule) -> Tensor:
    """One application of the reverse recursion with a given noise map"""
    x_prev = mu_from_eps(x_t, eps, t, schedule) + noise_scale(schedule, t) * z
    return check_finite(x_prev, "reverse-process state", t=t)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    States visited by one sampling run. ``states[t]`` is x_t and ``noise[t-1]`` is
    z_t; entries above the start timestep are None when leading steps were skipped.
    """
    states: Tuple[Optional[Tensor], ...]
    noise: Tuple[Optional[Tensor], ...]
    fingerprint: int
    data_shape: Tuple[int, ...]
    cond: Optional[str] = None
    strength: Optional[float] = None
    start: int = 0
    zero_final_noise: bool = False

    @property
    def x_0(self) -> Tensor:
        return self.states[0]

    @property
    def x_T(self) -> Optional[Tensor]:
        return self.states[-1]

    @property
    def steps(self) -> int:
        return len(self.noise)

    def to_latent(self) -> LatentCode:
        """Native latent code; the visited states become the auxiliary chain"""
        if self.start != self.steps:
            raise InvalidConfigError("only complete trajectories (T_skip = 0) have a native latent code")
        return LatentCode(
            x_T=self.states[-1],
            noise=self.noise,
            method=Method.NATIVE,
            fingerprint=self.fingerprint,
            data_shape=self.data_shape,
            chain=self.states,
            cond=self.cond,
            strength=self.strength,
            zero_final_noise=self.zero_final_noise,
        )


def _check_skip(schedule: Schedule, t_skip: int, upper: int) -> int:
    if int(t_skip) != t_skip or not 0 <= t_skip <= upper:
        raise InvalidConfigError(f"T_skip must be an integer in [0, {upper}], got {t_skip}")
    return int(t_skip)


def ddpm_sample(model: DenoiserModel, schedule: Schedule, rng: RngStream,
                cond: Optional[str] = None, strength: Optional[float] = None,
                t_skip: int = 0, x_init: Optional[Tensor] = None,
                count: Optional[int] = None) -> Trajectory:
    """
    Run the reverse process and record every state and noise map.

    Args:
        model: denoiser providing f_t
        schedule: diffusion schedule (eta selects DDPM/DDIM behaviour)
        rng: stream for x_T and every z_t
        cond: condition label for Conditional models
        strength: classifier-free guidance weight, None for plain prediction
        t_skip: number of leading steps skipped; needs ``x_init`` = x_{T - t_skip}
        x_init: starting state when ``t_skip > 0``
        count: batch size when drawing x_T, None for a single sample

    Returns:
        Trajectory: states x_T..x_0 and noise maps z_T..z_1
    """
    T = schedule.steps
    t_skip = _check_skip(schedule, t_skip, T - 1)
    f = eps_function(model, schedule, cond, strength)

    if t_skip > 0:
        if x_init is None:
            raise InvalidConfigError("T_skip > 0 needs x_init, the state to start from")
        x = np.array(x_init, dtype=np.float64)
    else:
        shape = model.data_shape if count is None else (count,) + model.data_shape
        x = randn(shape, rng)
    model.batch_shape(x)

    start = T - t_skip
    states: List[Optional[Tensor]] = [None] * (T + 1)
    noise: List[Optional[Tensor]] = [None] * T
    states[start] = x
    for t in range(start, 0, -1):
        if t == 1 and schedule.zero_final_noise:
            z = np.zeros_like(x)
        else:
            z = randn(x.shape, rng)
        try:
            x = reverse_step(x, f(x, t), z, t, schedule)
        except NumericalError as e:
            raise e.with_context(operation="ddpm_sample")
        states[t - 1] = x
        noise[t - 1] = z

    logger.debug(f"Sampled {start} reverse steps (cond={cond}, strength={strength})")
    return Trajectory(
        states=tuple(states), noise=tuple(noise), fingerprint=schedule.fingerprint,
        data_shape=model.data_shape, cond=cond, strength=strength, start=start,
        zero_final_noise=schedule.zero_final_noise,
    )


def generate_from_latent(model: DenoiserModel, schedule: Schedule, latent: LatentCode,
                         cond: Optional[str] = None, strength: Optional[float] = None,
                         t_skip: int = 0) -> Tensor:
    """Fix the latent's noise maps and rerun the reverse process from T - t_skip"""
    latent.check_schedule(schedule)
    T = schedule.steps
    t_skip = _check_skip(schedule, t_skip, T)
    start = T - t_skip

    if t_skip == 0:
        x = latent.x_T
    elif latent.chain is None:
        raise InvalidConfigError(f"T_skip={t_skip} needs the latent's auxiliary chain")
    else:
        x = latent.chain[start]
    if start == 0:
        return np.array(x, copy=True)

    f = eps_function(model, schedule, cond, strength)
    for t in range(start, 0, -1):
        try:
            x = reverse_step(x, f(x, t), latent.z(t), t, schedule)
        except NumericalError as e:
            raise e.with_context(operation="generate_from_latent")
    return x

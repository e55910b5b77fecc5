# core/schedule.py
"""
Diffusion variance schedule: beta_t, alpha_t, alpha_bar_t and the eta-parameterized
reverse-process noise scale sigma_t.

All per-step arrays are indexed directly by timestep t; index 0 holds the t=0
boundary value (beta=0, alpha=1, alpha_bar=1, sigma=0).
"""

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from core.errors import InvalidConfigError, TimestepError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Schedule:
    steps: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    eta: float
    sigma: np.ndarray
    respacing: Optional[Tuple[int, ...]] = None
    zero_final_noise: bool = False
    fingerprint: int = field(init=False)

    def __post_init__(self):
        for name in ("beta", "alpha", "alpha_bar", "sigma"):
            array = np.array(getattr(self, name), dtype=np.float64)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        object.__setattr__(self, "fingerprint", _fingerprint(self))

    @property
    def T(self) -> int:
        return self.steps

    def check_timestep(self, t: int) -> int:
        if not 1 <= int(t) <= self.steps:
            raise TimestepError(f"timestep {t} outside [1, {self.steps}]")
        return int(t)

    def with_eta(self, eta: float) -> 'Schedule':
        """Same alpha_bar sequence with a different eta"""
        _check_eta(eta)
        return _assemble(self.alpha_bar, eta, self.respacing, self.zero_final_noise)

    def with_zero_final_noise(self, enabled: bool) -> 'Schedule':
        return _assemble(self.alpha_bar, self.eta, self.respacing, bool(enabled))

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "eta": self.eta,
            "respacing": list(self.respacing) if self.respacing else None,
            "zero_final_noise": self.zero_final_noise,
            "fingerprint": f"{self.fingerprint:016x}",
        }

    def __repr__(self) -> str:
        return (f"Schedule(T={self.steps}, eta={self.eta}, respaced={self.respacing is not None}, "
                f"zero_final_noise={self.zero_final_noise}, fingerprint={self.fingerprint:016x})")


def _fingerprint(schedule: Schedule) -> int:
    digest = hashlib.blake2b(digest_size=8)
    digest.update(np.ascontiguousarray(schedule.alpha_bar, dtype='<f8').tobytes())
    digest.update(struct.pack('<d?', schedule.eta, schedule.zero_final_noise))
    return int.from_bytes(digest.digest(), "little")


def _check_eta(eta: float) -> None:
    if not 0.0 <= eta <= 1.0:
        raise InvalidConfigError(f"eta must lie in [0, 1], got {eta}")


def _sigmas(beta: np.ndarray, alpha_bar: np.ndarray, eta: float) -> np.ndarray:
    sigma = np.zeros_like(alpha_bar)
    variance = beta[1:] * (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:])
    sigma[1:] = eta * np.sqrt(variance)
    # keeps sqrt(1 - alpha_bar[t-1] - sigma_t^2) real under rounding
    sigma[1:] = np.minimum(sigma[1:], np.sqrt(1.0 - alpha_bar[:-1]))
    return sigma


def _assemble(alpha_bar: np.ndarray, eta: float, respacing, zero_final_noise: bool) -> Schedule:
    alpha_bar = np.array(alpha_bar, dtype=np.float64)
    alpha = np.ones_like(alpha_bar)
    alpha[1:] = alpha_bar[1:] / alpha_bar[:-1]
    beta = 1.0 - alpha
    return Schedule(
        steps=len(alpha_bar) - 1,
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        eta=float(eta),
        sigma=_sigmas(beta, alpha_bar, eta),
        respacing=tuple(int(t) for t in respacing) if respacing is not None else None,
        zero_final_noise=zero_final_noise,
    )


def make_linear_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02,
                         eta: float = 1.0, zero_final_noise: bool = False) -> Schedule:
    """Linear beta schedule from ``beta_start`` to ``beta_end`` inclusive over T steps"""
    if int(T) != T or T < 1:
        raise InvalidConfigError(f"step count must be a positive integer, got {T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise InvalidConfigError(
            f"need 0 < beta_start <= beta_end < 1, got beta_start={beta_start}, beta_end={beta_end}")
    _check_eta(eta)

    T = int(T)
    beta = np.zeros(T + 1)
    beta[1:] = np.linspace(beta_start, beta_end, T) if T > 1 else beta_start
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)

    schedule = Schedule(
        steps=T,
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        eta=float(eta),
        sigma=_sigmas(beta, alpha_bar, eta),
        respacing=None,
        zero_final_noise=bool(zero_final_noise),
    )
    logger.debug(f"Built linear schedule {schedule!r}")
    return schedule


def respace(schedule: Schedule, K: int) -> Schedule:
    """
    K-step schedule over the uniform subsequence t_k = floor(k*T/K), k=1..K.

    Retained alpha_bar values are copied unchanged; per-step alphas become the
    ratios of consecutive retained values.
    """
    if int(K) != K or not 1 <= K <= schedule.steps:
        raise InvalidConfigError(f"respacing needs 1 <= K <= {schedule.steps}, got {K}")
    K = int(K)
    if K == schedule.steps:
        return schedule

    retained = [(k * schedule.steps) // K for k in range(1, K + 1)]
    alpha_bar = np.concatenate(([schedule.alpha_bar[0]], schedule.alpha_bar[retained]))
    base = schedule.respacing or tuple(range(1, schedule.steps + 1))
    respacing = tuple(base[t - 1] for t in retained)
    return _assemble(alpha_bar, schedule.eta, respacing, schedule.zero_final_noise)


def sigma_of(schedule: Schedule, t: int) -> float:
    """sigma_t = eta * sqrt(beta_t (1 - alpha_bar[t-1]) / (1 - alpha_bar[t]))"""
    return float(schedule.sigma[schedule.check_timestep(t)])


def noise_scale(schedule: Schedule, t: int) -> float:
    """
    Scale multiplying z_t in the reverse step.

    Equals sigma_of for t >= 2. At t=1 sigma_1 is zero because alpha_bar[0] = 1;
    unless the schedule keeps the z_1 = 0 convention, the last step instead uses
    the DDPM large-variance choice eta * sqrt(beta_1).
    """
    t = schedule.check_timestep(t)
    if t == 1 and not schedule.zero_final_noise:
        return float(schedule.eta * np.sqrt(schedule.beta[1]))
    return float(schedule.sigma[t])


def direction_coefficient(schedule: Schedule, t: int) -> float:
    """sqrt(1 - alpha_bar[t-1] - sigma_t^2), the D(.) coefficient"""
    t = schedule.check_timestep(t)
    remainder = 1.0 - schedule.alpha_bar[t - 1] - schedule.sigma[t] ** 2
    return float(np.sqrt(max(remainder, 0.0)))


def schedule_from_config(config: dict) -> Schedule:
    """Build a schedule from the ``schedule`` config section"""
    try:
        schedule = make_linear_schedule(
            int(config.get("steps", 1000)),
            float(config.get("beta_start", 1e-4)),
            float(config.get("beta_end", 0.02)),
            float(config.get("eta", 1.0)),
            bool(config.get("zero_final_noise", False)),
        )
        respacing = config.get("respacing")
    except (TypeError, ValueError) as e:
        if isinstance(e, InvalidConfigError):
            raise
        raise InvalidConfigError(f"invalid schedule configuration: {e}") from e
    if respacing:
        schedule = respace(schedule, int(respacing))
    return schedule

# core/latent.py

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.errors import IncompatibleLatentError, InvalidConfigError
from core.numerics import Tensor
from core.schedule import Schedule


class Method(str, Enum):
    EDIT_FRIENDLY = "edit-friendly"
    CYCLEDIFFUSION = "cyclediffusion"
    NATIVE = "native"
    DDIM = "ddim"


@dataclass(frozen=True, eq=False)
class LatentCode:
    """
    Latent code {x_T, z_T, ..., z_1} of one output (or a batch of outputs).

    ``noise[t-1]`` holds z_t. ``chain[t]`` holds the auxiliary state x_t used for
    T_skip starts, with ``chain[0]`` equal to the encoded x_0.
    """
    x_T: Tensor
    noise: Tuple[Tensor, ...]
    method: Method
    fingerprint: int
    data_shape: Tuple[int, ...]
    chain: Optional[Tuple[Tensor, ...]] = None
    cond: Optional[str] = None
    strength: Optional[float] = None
    zero_final_noise: bool = False

    def __post_init__(self):
        object.__setattr__(self, "noise", tuple(self.noise))
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "data_shape", tuple(self.data_shape))
        if self.chain is not None:
            object.__setattr__(self, "chain", tuple(self.chain))
            if len(self.chain) != len(self.noise) + 1:
                raise InvalidConfigError(
                    f"auxiliary chain has {len(self.chain)} states, expected {len(self.noise) + 1}")

    @property
    def steps(self) -> int:
        return len(self.noise)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.x_T.shape

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.x_T.shape[:self.x_T.ndim - len(self.data_shape)]

    @property
    def has_chain(self) -> bool:
        return self.chain is not None

    @property
    def x_0(self) -> Optional[Tensor]:
        return self.chain[0] if self.chain is not None else None

    def z(self, t: int) -> Tensor:
        return self.noise[t - 1]

    def check_schedule(self, schedule: Schedule) -> None:
        if schedule.fingerprint != self.fingerprint or schedule.steps != self.steps:
            raise IncompatibleLatentError(
                f"latent fingerprint {self.fingerprint:016x} (T={self.steps}) does not match "
                f"schedule {schedule.fingerprint:016x} (T={schedule.steps})")

    def map_tensors(self, transform) -> 'LatentCode':
        """Apply ``transform`` to x_T, every z_t and every chain state"""
        chain = tuple(transform(state) for state in self.chain) if self.chain is not None else None
        return replace(self, x_T=transform(self.x_T),
                       noise=tuple(transform(z) for z in self.noise), chain=chain)

    def stacked_noise(self) -> np.ndarray:
        """All z_t stacked on a leading t axis (index t-1)"""
        return np.stack(self.noise)

    def __repr__(self) -> str:
        return (f"LatentCode(method={self.method.value}, T={self.steps}, shape={self.shape}, "
                f"chain={self.has_chain}, cond={self.cond!r}, fingerprint={self.fingerprint:016x})")


def check_compatible(codes: Sequence[LatentCode], error=IncompatibleLatentError) -> List[LatentCode]:
    """Codes pooled together must share schedule fingerprint and data shape"""
    codes = list(codes)
    fingerprints = {code.fingerprint for code in codes}
    shapes = {code.data_shape for code in codes}
    if len(fingerprints) > 1 or len(shapes) > 1:
        raise error(f"latent codes mix schedules {sorted(f'{f:016x}' for f in fingerprints)} "
                    f"or data shapes {sorted(shapes)}")
    return codes

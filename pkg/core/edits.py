# core/edits.py
"""
Latent-space edits: shift, flip, masked color edits and condition swaps.

Edit axes index the model's data shape (axis 1 of a 2-D field is the column
axis); leading batch axes are left alone.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from core.denoiser import Conditional, DenoiserModel
from core.errors import InvalidEditError, NumericalError
from core.latent import LatentCode
from core.numerics import Tensor, as_tensor
from core.sampler import eps_function, generate_from_latent, predicted_x0, reverse_step
from core.schedule import Schedule

logger = logging.getLogger(__name__)

DEFAULT_SOURCE_OFFSET = 50


@dataclass(frozen=True)
class Shift:
    """
    Move content by ``d`` cells toward increasing index along ``axis``. The vacated
    low-index cells are filled with the block [source_offset, source_offset + d)
    of the same map. The default offset is min(50, (extent - d) // 2); an offset of
    extent - d would refill from the trailing block and turn the shift into a cyclic roll.
    """
    d: int
    axis: int = -1
    source_offset: Optional[int] = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 0:
            raise InvalidEditError(f"shift distance must be a nonnegative integer, got {self.d}")


@dataclass(frozen=True)
class Flip:
    axis: int = -1


@dataclass(frozen=True, eq=False)
class ColorEdit:
    """z_t <- z_t + s * B * (M - P(f_t(x_t))) for every t in [t1, t2]"""
    mask: Tensor
    target: Tensor
    strength: float
    t1: int
    t2: int

    def __post_init__(self):
        mask = as_tensor(self.mask, "mask")
        if not np.all((mask == 0.0) | (mask == 1.0)):
            raise InvalidEditError("color-edit mask must be binary")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "target", as_tensor(self.target, "target"))
        if not np.isfinite(self.strength):
            raise InvalidEditError(f"edit strength must be finite, got {self.strength}")
        if not 1 <= self.t1 <= self.t2:
            raise InvalidEditError(f"need 1 <= t1 <= t2, got t1={self.t1}, t2={self.t2}")


@dataclass(frozen=True)
class CondSwap:
    target_cond: str
    strength: Optional[float] = None
    t_skip: int = 0


EditSpec = Union[Shift, Flip, ColorEdit, CondSwap]


def _array_axis(ndim: int, data_shape: Tuple[int, ...], axis: int) -> int:
    data_ndim = len(data_shape)
    if not -data_ndim <= axis < data_ndim:
        raise InvalidEditError(f"axis {axis} out of range for data shape {data_shape}")
    return ndim - data_ndim + (axis % data_ndim)


def default_source_offset(extent: int, d: int) -> int:
    """
    Offset 50 for wide maps; on narrow grids the block is taken from the middle,
    since an offset of extent - d would reproduce a cyclic roll.
    """
    return min(DEFAULT_SOURCE_OFFSET, (extent - d) // 2)


def _shift_geometry(shape: Tuple[int, ...], data_shape: Tuple[int, ...], spec: Shift) -> Tuple[int, int]:
    axis = _array_axis(len(shape), data_shape, spec.axis)
    extent = shape[axis]
    if spec.d >= extent:
        raise InvalidEditError(f"shift d={spec.d} must be smaller than the extent {extent}")
    offset = default_source_offset(extent, spec.d) if spec.source_offset is None else int(spec.source_offset)
    if offset < 0 or offset + spec.d > extent:
        raise InvalidEditError(f"source block [{offset}, {offset + spec.d}) exceeds extent {extent}")
    return axis, offset


def shift_tensor(tensor: Tensor, d: int, axis: int, source_offset: int) -> Tensor:
    if d == 0:
        return np.array(tensor, copy=True)
    moved = np.moveaxis(np.asarray(tensor), axis, 0)
    shifted = np.empty_like(moved)
    shifted[d:] = moved[:-d]
    shifted[:d] = moved[source_offset:source_offset + d]
    return np.moveaxis(shifted, 0, axis)


def shift_data(x: Tensor, spec: Shift, data_shape: Tuple[int, ...]) -> Tensor:
    """The same shift applied to an image, e.g. to build the reference for a shifted latent"""
    x = np.asarray(x, dtype=np.float64)
    axis, offset = _shift_geometry(x.shape, tuple(data_shape), spec)
    return shift_tensor(x, spec.d, axis, offset)


def flip_data(x: Tensor, spec: Flip, data_shape: Tuple[int, ...]) -> Tensor:
    x = np.asarray(x, dtype=np.float64)
    return np.flip(x, axis=_array_axis(x.ndim, tuple(data_shape), spec.axis)).copy()


def shift_latent(latent: LatentCode, spec: Shift) -> LatentCode:
    """Shift x_T, every z_t and every chain state by ``spec.d`` along ``spec.axis``"""
    axis, offset = _shift_geometry(latent.shape, latent.data_shape, spec)
    logger.debug(f"Shifting latent by {spec.d} along axis {axis} (source offset {offset})")
    return latent.map_tensors(lambda tensor: shift_tensor(tensor, spec.d, axis, offset))


def flip_latent(latent: LatentCode, spec: Flip) -> LatentCode:
    """Reverse every noise map and chain state along ``spec.axis``"""
    axis = _array_axis(len(latent.shape), latent.data_shape, spec.axis)
    return latent.map_tensors(lambda tensor: np.flip(tensor, axis=axis).copy())


def color_edit_generate(latent: LatentCode, model: DenoiserModel, schedule: Schedule,
                        spec: ColorEdit, cond: Optional[str] = None,
                        strength: Optional[float] = None) -> Tensor:
    """
    Regenerate from the latent while pushing the predicted clean image toward the
    target colors inside the mask. P(f_t(x_t)) is taken from the edited pass itself.
    """
    latent.check_schedule(schedule)
    if spec.t2 > schedule.steps:
        raise InvalidEditError(f"t2={spec.t2} exceeds T={schedule.steps}")
    if spec.mask.shape != latent.data_shape:
        raise InvalidEditError(f"mask {spec.mask.shape} does not match data shape {latent.data_shape}")
    try:
        target = np.broadcast_to(spec.target, latent.data_shape)
    except ValueError as e:
        raise InvalidEditError(f"target {spec.target.shape} does not broadcast to {latent.data_shape}") from e

    f = eps_function(model, schedule, cond, strength)
    x = latent.x_T
    for t in range(schedule.steps, 0, -1):
        eps = f(x, t)
        z = latent.z(t)
        if spec.t1 <= t <= spec.t2:
            z = z + spec.strength * spec.mask * (target - predicted_x0(x, eps, t, schedule))
        try:
            x = reverse_step(x, eps, z, t, schedule)
        except NumericalError as e:
            raise e.with_context(operation="color_edit_generate")
    return x


def cond_swap_generate(latent: LatentCode, model: DenoiserModel, spec: CondSwap,
                       schedule: Schedule) -> Tensor:
    """Regenerate the latent under a target condition, starting at T - T_skip"""
    if not isinstance(model, Conditional):
        raise InvalidEditError("condition swaps need a conditional model")
    model.resolve(spec.target_cond)
    return generate_from_latent(model, schedule, latent, spec.target_cond, spec.strength, spec.t_skip)

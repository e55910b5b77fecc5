# core/latent_io.py
"""
Binary latent-code files.

Layout (little-endian):

    magic            4 bytes  b"EFNZ"
    version          u16
    fingerprint      u64      schedule fingerprint
    method           u8       see METHOD_CODES
    flags            u8       see FLAG_*
    T                u32
    ndim, data_ndim  u8, u8   full tensor rank and the model's data rank
    shape            u32 * ndim
    cond             u16 length + UTF-8 bytes
    strength         f64      (meaningful when FLAG_STRENGTH is set)
    payload          f64      x_T, z_T .. z_1, then x_T .. x_0 if FLAG_CHAIN

Readers accept every version in [MIN_READABLE_VERSION, FORMAT_VERSION]. A release
that keeps the layout only bumps FORMAT_VERSION; a layout change also raises
MIN_READABLE_VERSION.
"""

import logging
import os
import struct
from typing import Optional

import numpy as np

from core.errors import LatentCorruptionError, LatentFormatError
from core.latent import LatentCode, Method
from core.schedule import Schedule

logger = logging.getLogger(__name__)

MAGIC = b"EFNZ"
FORMAT_VERSION = 1
MIN_READABLE_VERSION = 1

FLAG_CHAIN = 0x01
FLAG_ZERO_FINAL_NOISE = 0x02
FLAG_STRENGTH = 0x04
FLAG_COND = 0x08
KNOWN_FLAGS = FLAG_CHAIN | FLAG_ZERO_FINAL_NOISE | FLAG_STRENGTH | FLAG_COND

METHOD_CODES = {
    Method.EDIT_FRIENDLY: 1,
    Method.CYCLEDIFFUSION: 2,
    Method.NATIVE: 3,
    Method.DDIM: 4,
}
METHODS_BY_CODE = {code: method for method, code in METHOD_CODES.items()}

_FIXED_HEADER = struct.Struct("<4sHQBBIBB")
_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")
_F64 = struct.Struct("<d")
_PAYLOAD_DTYPE = np.dtype("<f8")


def _encode_header(code: LatentCode, shape) -> bytes:
    flags = 0
    if code.has_chain:
        flags |= FLAG_CHAIN
    if code.zero_final_noise:
        flags |= FLAG_ZERO_FINAL_NOISE
    if code.strength is not None:
        flags |= FLAG_STRENGTH
    if code.cond is not None:
        flags |= FLAG_COND
    cond = (code.cond or "").encode("utf-8")

    parts = [_FIXED_HEADER.pack(MAGIC, FORMAT_VERSION, code.fingerprint, METHOD_CODES[code.method],
                                flags, code.steps, len(shape), len(code.data_shape))]
    parts.extend(_U32.pack(extent) for extent in shape)
    parts.append(_U16.pack(len(cond)) + cond)
    parts.append(_F64.pack(code.strength if code.strength is not None else 0.0))
    return b"".join(parts)


def save_latent(code: LatentCode, path: str) -> None:
    """Write ``code`` to ``path``; the file only appears once fully written"""
    shape = code.shape
    tensors = [code.x_T] + [code.z(t) for t in range(code.steps, 0, -1)]
    if code.has_chain:
        tensors.extend(code.chain[t] for t in range(code.steps, -1, -1))

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    temporary = f"{path}.partial"
    try:
        with open(temporary, "wb") as handle:
            handle.write(_encode_header(code, shape))
            for tensor in tensors:
                if tensor.shape != shape:
                    raise LatentFormatError(f"tensor of shape {tensor.shape} in a latent of shape {shape}")
                handle.write(np.ascontiguousarray(tensor, dtype=_PAYLOAD_DTYPE).tobytes())
    except BaseException:
        if os.path.exists(temporary):
            os.remove(temporary)
        raise
    os.replace(temporary, path)
    logger.debug(f"Saved {code!r} to {path}")


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise LatentCorruptionError(
                f"{self.path}: truncated at byte {len(self.data)}, needed {self.offset + size}")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, layout: struct.Struct):
        return layout.unpack(self.take(layout.size))


def load_latent(path: str, schedule: Optional[Schedule] = None) -> LatentCode:
    """
    Read a latent file. With ``schedule`` given the fingerprint is checked right
    away; otherwise the check happens when the code is used.
    """
    with open(path, "rb") as handle:
        data = handle.read()
    reader = _Reader(data, path)

    if len(data) < _FIXED_HEADER.size or data[:4] != MAGIC:
        raise LatentFormatError(f"{path}: not a latent file (bad magic)")
    magic, version, fingerprint, method_code, flags, steps, ndim, data_ndim = reader.unpack(_FIXED_HEADER)
    if not MIN_READABLE_VERSION <= version <= FORMAT_VERSION:
        raise LatentFormatError(
            f"{path}: format version {version} unsupported "
            f"(readable: {MIN_READABLE_VERSION}..{FORMAT_VERSION})")
    if method_code not in METHODS_BY_CODE:
        raise LatentFormatError(f"{path}: unknown method tag {method_code}")
    if flags & ~KNOWN_FLAGS:
        raise LatentFormatError(f"{path}: unknown flag bits 0x{flags & ~KNOWN_FLAGS:02x}")
    if steps < 1 or data_ndim > ndim or ndim == 0:
        raise LatentCorruptionError(f"{path}: inconsistent header (T={steps}, ndim={ndim}, data_ndim={data_ndim})")

    shape = tuple(reader.unpack(_U32)[0] for _ in range(ndim))
    if any(extent == 0 for extent in shape):
        raise LatentCorruptionError(f"{path}: zero extent in shape {shape}")
    (cond_length,) = reader.unpack(_U16)
    try:
        cond = reader.take(cond_length).decode("utf-8")
    except UnicodeDecodeError as e:
        raise LatentCorruptionError(f"{path}: condition label is not UTF-8") from e
    (strength,) = reader.unpack(_F64)

    size = int(np.prod(shape))
    count = 1 + steps + (steps + 1 if flags & FLAG_CHAIN else 0)
    payload = reader.take(count * size * _PAYLOAD_DTYPE.itemsize)
    if reader.offset != len(data):
        raise LatentCorruptionError(f"{path}: {len(data) - reader.offset} trailing bytes after payload")
    tensors = np.frombuffer(payload, dtype=_PAYLOAD_DTYPE).astype(np.float64).reshape((count,) + shape)

    x_T = tensors[0]
    noise = tuple(tensors[1 + steps - t] for t in range(1, steps + 1))
    chain = None
    if flags & FLAG_CHAIN:
        states = tensors[1 + steps:]
        chain = tuple(states[steps - t] for t in range(steps + 1))

    code = LatentCode(
        x_T=x_T,
        noise=noise,
        method=METHODS_BY_CODE[method_code],
        fingerprint=fingerprint,
        data_shape=shape[ndim - data_ndim:],
        chain=chain,
        cond=cond if flags & FLAG_COND else None,
        strength=strength if flags & FLAG_STRENGTH else None,
        zero_final_noise=bool(flags & FLAG_ZERO_FINAL_NOISE),
    )
    if schedule is not None:
        code.check_schedule(schedule)
    logger.debug(f"Loaded {code!r} from {path} (format v{version})")
    return code

# core/numerics.py
"""
Tensor helpers, seeded random streams and the small dense linear-algebra kernels
the rest of the package builds on.

Tensors are plain ``numpy.ndarray`` values of dtype float64. Functions in this
package never modify their tensor arguments in place.

Random streams use numpy's PCG64 bit generator seeded through ``SeedSequence``;
normal variates come from ``Generator.standard_normal`` (ziggurat method). For a
fixed numpy release the streams are bit-identical across runs and platforms.
"""

import hashlib
import logging
from typing import Any, Iterable, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg as sla

from core.errors import DecompositionError, InvalidShapeError, NonFiniteError

logger = logging.getLogger(__name__)

Tensor = np.ndarray

RNG_ALGORITHM = "PCG64"
NORMAL_METHOD = "ziggurat"
SYMMETRY_TOLERANCE = 1e-10


def as_tensor(values: ArrayLike, what: str = "tensor") -> Tensor:
    """Convert literals to a float64 tensor, rejecting empty or non-finite input"""
    tensor = np.array(values, dtype=np.float64)
    if tensor.size == 0 or any(extent < 1 for extent in tensor.shape):
        raise InvalidShapeError(f"{what} has an empty extent: shape {tensor.shape}")
    check_finite(tensor, what)
    return tensor


def tensor_stats(tensor: Tensor) -> dict:
    """Summary used in numerical error context"""
    finite = tensor[np.isfinite(tensor)]
    stats = {
        "shape": tuple(tensor.shape),
        "nan": int(np.isnan(tensor).sum()),
        "inf": int(np.isinf(tensor).sum()),
    }
    if finite.size:
        stats.update(min=float(finite.min()), max=float(finite.max()), mean=float(finite.mean()))
    return stats


def check_finite(tensor: Tensor, what: str = "tensor", **context: Any) -> Tensor:
    """Raise NonFiniteError if the tensor holds NaN or Inf"""
    if not np.all(np.isfinite(tensor)):
        raise NonFiniteError(f"{what} contains non-finite values",
                             {**context, **tensor_stats(np.asarray(tensor))})
    return tensor


def check_same_shape(*tensors: Tensor, what: str = "operands") -> Tuple[int, ...]:
    """Elementwise operations require identical shapes; numpy broadcasting is not allowed"""
    shapes = {np.shape(tensor) for tensor in tensors}
    if len(shapes) != 1:
        raise InvalidShapeError(f"{what} have mismatched shapes: {sorted(shapes)}")
    return shapes.pop()


def check_shape(shape: Iterable[int]) -> Tuple[int, ...]:
    """Validate a requested shape: non-empty with every extent >= 1"""
    extents = tuple(int(extent) for extent in shape)
    if not extents or any(extent < 1 for extent in extents):
        raise InvalidShapeError(f"invalid shape {extents}: extents must be >= 1")
    return extents


def _label_key(label: str) -> int:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """
    Single-owner deterministic random stream.

    Child streams are keyed by (seed, label path), so they are reproducible and
    independent of how much the parent has already drawn. Parallel work must
    derive its children up front.
    """

    def __init__(self, seed: int, _path: Tuple[int, ...] = ()):
        if not isinstance(seed, (int, np.integer)) or seed < 0 or seed >= 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
        self.seed = int(seed)
        self.algorithm = RNG_ALGORITHM
        self._path = tuple(_path)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self._path)
        self._generator = np.random.Generator(np.random.PCG64(sequence))
        self.position = 0

    def child(self, label: str) -> 'RngStream':
        """Derive an independent, reproducible stream for ``label``"""
        return RngStream(self.seed, self._path + (_label_key(str(label)),))

    def children(self, prefix: str, count: int) -> list:
        return [self.child(f"{prefix}-{index}") for index in range(count)]

    def standard_normal(self, shape: Tuple[int, ...]) -> Tensor:
        values = self._generator.standard_normal(shape, dtype=np.float64)
        self.position += values.size
        return values

    def integers(self, high: int, size: Optional[int] = None):
        values = self._generator.integers(0, high, size=size)
        self.position += 1 if size is None else int(size)
        return values

    def choice(self, count: int, size: int, p: Sequence[float]) -> np.ndarray:
        values = self._generator.choice(count, size=size, p=p)
        self.position += int(size)
        return values

    def __repr__(self) -> str:
        return f"RngStream({self.algorithm}, seed={self.seed}, path={self._path}, position={self.position})"


def randn(shape: Iterable[int], rng: RngStream) -> Tensor:
    """I.i.d. standard normal tensor; advances ``rng`` deterministically"""
    return rng.standard_normal(check_shape(shape))


def spd_factor(matrix: Tensor):
    """Cholesky factor of a symmetric positive-definite matrix (scipy cho_factor form)"""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidShapeError(f"expected a square matrix, got shape {matrix.shape}")
    asymmetry = np.max(np.abs(matrix - matrix.T)) if matrix.size else 0.0
    if asymmetry > SYMMETRY_TOLERANCE:
        raise DecompositionError("matrix is not symmetric", {"asymmetry": float(asymmetry)})
    try:
        return sla.cho_factor(matrix, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise DecompositionError(f"Cholesky decomposition failed: {e}",
                                 {"size": matrix.shape[0]}) from e


def spd_logdet(factor) -> float:
    lower, _ = factor
    return float(2.0 * np.sum(np.log(np.diag(lower))))


def solve_factored(factor, rhs: Tensor) -> Tensor:
    """Solve with a precomputed factor; ``rhs`` is (n,) or (..., n) row vectors"""
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.ndim == 1:
        return sla.cho_solve(factor, rhs)
    flat = rhs.reshape(-1, rhs.shape[-1])
    return sla.cho_solve(factor, flat.T).T.reshape(rhs.shape)


def solve_spd(matrix: Tensor, rhs: Tensor) -> Tensor:
    """Solve ``A x = b`` for symmetric positive-definite ``A``"""
    matrix = np.asarray(matrix, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != matrix.shape[0]:
        raise InvalidShapeError(f"right-hand side shape {rhs.shape} does not match matrix {matrix.shape}")
    factor = spd_factor(matrix)
    return sla.cho_solve(factor, rhs)


def spd_eigh(matrix: Tensor) -> Tuple[Tensor, Tensor]:
    """Eigendecomposition of an SPD matrix; fails if the smallest eigenvalue is not positive"""
    try:
        values, vectors = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as e:
        raise DecompositionError(f"eigendecomposition failed: {e}") from e
    if values[0] <= 0.0:
        raise DecompositionError("matrix is not positive definite",
                                 {"min_eigenvalue": float(values[0])})
    return values, vectors


def rms(tensor: Tensor) -> float:
    return float(np.sqrt(np.mean(np.square(tensor))))


def rms_distance(a: Tensor, b: Tensor) -> float:
    check_same_shape(a, b)
    return rms(np.asarray(a) - np.asarray(b))


def max_abs_error(a: Tensor, b: Tensor) -> float:
    check_same_shape(a, b)
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))

# core/stats.py
"""
Statistics of noise maps and edit outputs.

Every function here is a deterministic reduction of its inputs. Latent codes may
carry leading batch axes; each batch member counts as one sample.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import stats as scipy_stats

from core.errors import InvalidInputError
from core.latent import LatentCode, check_compatible
from core.numerics import Tensor, rms_distance

logger = logging.getLogger(__name__)

ANGLE_RANGE = (0.0, 180.0)


@dataclass(frozen=True, eq=False)
class StatsSeries:
    """One scalar statistic per timestep with its standard error"""
    t: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    count: int

    def __post_init__(self):
        for name in ("t", "value", "stderr"):
            object.__setattr__(self, name, np.asarray(getattr(self, name)))
        if not len(self.t) == len(self.value) == len(self.stderr):
            raise InvalidInputError(
                f"series lengths differ: t={len(self.t)}, value={len(self.value)}, stderr={len(self.stderr)}")
        if np.any(self.stderr < 0):
            raise InvalidInputError("standard errors must be nonnegative")

    def __len__(self) -> int:
        return len(self.t)

    def at(self, t: int) -> float:
        index = np.flatnonzero(self.t == t)
        if index.size == 0:
            raise InvalidInputError(f"t={t} not in series")
        return float(self.value[index[0]])

    def rows(self) -> List[Tuple[int, float, float, int]]:
        return [(int(t), float(v), float(e), self.count) for t, v, e in zip(self.t, self.value, self.stderr)]


@dataclass(frozen=True, eq=False)
class AngleHistogram:
    """
    Angles between consecutive noise vectors, in degrees. ``mean_angle`` is taken
    over the raw angles rather than bin centers.
    """
    edges: np.ndarray
    counts: np.ndarray
    mean_angle: float
    skipped: int = 0

    def __post_init__(self):
        if len(self.edges) != len(self.counts) + 1:
            raise InvalidInputError("histogram needs one more edge than bins")
        if self.edges[0] != ANGLE_RANGE[0] or self.edges[-1] != ANGLE_RANGE[1]:
            raise InvalidInputError(f"angle bins must cover {ANGLE_RANGE}")

    @property
    def bins(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def modal_bin(self) -> Tuple[float, float]:
        """Edges of the most populated bin (lowest index on ties)"""
        index = int(np.argmax(self.counts))
        return float(self.edges[index]), float(self.edges[index + 1])

    def bin_of(self, angle: float) -> int:
        """Index of the bin holding ``angle``; 180 belongs to the last bin"""
        index = int(np.searchsorted(self.edges, angle, side="right")) - 1
        return min(max(index, 0), self.bins - 1)

    def uniformity(self) -> Tuple[float, float]:
        return chi_square_uniformity(self.counts)

    def rows(self) -> List[Tuple[float, float, int]]:
        return [(float(lo), float(hi), int(c)) for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts)]


def _sample_count(code: LatentCode) -> int:
    return int(np.prod(code.batch_shape, dtype=np.int64))


def _check_codes(codes: Sequence[LatentCode]) -> List[LatentCode]:
    codes = list(codes)
    if not codes:
        raise InvalidInputError("no latent codes given")
    codes = check_compatible(codes)
    if len({code.steps for code in codes}) > 1:
        raise InvalidInputError("latent codes have different numbers of steps")
    if sum(_sample_count(code) for code in codes) < 2:
        raise InvalidInputError("statistics need at least 2 latent codes (or batch members)")
    return codes


def _noise_matrix(codes: Sequence[LatentCode], t: int) -> np.ndarray:
    """z_t of every sample as rows of a (samples, coordinates) matrix"""
    size = int(np.prod(codes[0].data_shape))
    return np.concatenate([np.reshape(code.z(t), (-1, size)) for code in codes], axis=0)


def _first_correlated_step(codes: Sequence[LatentCode]) -> int:
    # under the z_1 = 0 convention the pair (z_2, z_1) carries no information
    return 3 if any(code.zero_final_noise for code in codes) else 2


def per_step_std(codes: Sequence[LatentCode], pooled: bool = True) -> StatsSeries:
    """
    Standard deviation of z_t for every t.

    pooled=True takes one std over all coordinates and samples together, with
    stderr s / sqrt(2(n - 1)). pooled=False averages the per-coordinate std across
    samples and reports the spread of those stds as stderr.
    """
    codes = _check_codes(codes)
    steps = codes[0].steps
    values = np.empty(steps)
    errors = np.empty(steps)
    count = 0
    for t in range(1, steps + 1):
        z = _noise_matrix(codes, t)
        count = z.shape[0]
        if pooled:
            n = z.size
            std = float(np.std(z, ddof=1))
            values[t - 1] = std
            errors[t - 1] = std / np.sqrt(2.0 * (n - 1))
        else:
            per_coordinate = np.std(z, axis=0, ddof=1)
            values[t - 1] = float(per_coordinate.mean())
            errors[t - 1] = float(per_coordinate.std() / np.sqrt(per_coordinate.size))
    return StatsSeries(t=np.arange(1, steps + 1), value=values, stderr=errors, count=count)


def consecutive_corr(codes: Sequence[LatentCode]) -> StatsSeries:
    """Pearson correlation between z_t and z_{t-1}, pooled over coordinates and samples"""
    codes = _check_codes(codes)
    steps = codes[0].steps
    first = _first_correlated_step(codes)
    timesteps = np.arange(first, steps + 1)
    values = np.empty(len(timesteps))
    errors = np.empty(len(timesteps))
    count = 0
    for i, t in enumerate(timesteps):
        matrix = _noise_matrix(codes, t)
        count = matrix.shape[0]
        current = matrix.ravel()
        previous = _noise_matrix(codes, t - 1).ravel()
        if np.std(current) == 0.0 or np.std(previous) == 0.0:
            raise InvalidInputError(f"correlation undefined at t={t}: noise maps have zero variance")
        r = float(np.corrcoef(current, previous)[0, 1])
        values[i] = r
        errors[i] = np.sqrt(max(1.0 - r * r, 0.0) / (current.size - 2))
    return StatsSeries(t=timesteps, value=values, stderr=errors, count=count)


def consecutive_angles(codes: Sequence[LatentCode]) -> Tuple[np.ndarray, int]:
    """All angles (degrees) between z_t and z_{t-1}, and the number of pairs skipped for a zero norm"""
    codes = _check_codes(codes)
    first = _first_correlated_step(codes)
    angles = []
    skipped = 0
    for t in range(first, codes[0].steps + 1):
        current = _noise_matrix(codes, t)
        previous = _noise_matrix(codes, t - 1)
        norms = np.linalg.norm(current, axis=1) * np.linalg.norm(previous, axis=1)
        usable = norms > 0.0
        skipped += int(np.count_nonzero(~usable))
        cosine = np.einsum("ij,ij->i", current[usable], previous[usable]) / norms[usable]
        angles.append(np.degrees(np.arccos(np.clip(cosine, -1.0, 1.0))))
    angles = np.concatenate(angles) if angles else np.empty(0)
    if skipped:
        logger.debug(f"Skipped {skipped} zero-norm noise pairs")
    return angles, skipped


def angle_histogram(codes: Sequence[LatentCode], bins: int = 18) -> AngleHistogram:
    if int(bins) != bins or bins < 2:
        raise InvalidInputError(f"angle histogram needs at least 2 bins, got {bins}")
    angles, skipped = consecutive_angles(codes)
    counts, edges = np.histogram(angles, bins=int(bins), range=ANGLE_RANGE)
    mean = float(angles.mean()) if angles.size else float("nan")
    return AngleHistogram(edges=edges, counts=counts, mean_angle=mean, skipped=skipped)


def chi_square_uniformity(counts: Sequence[int]) -> Tuple[float, float]:
    """Pearson chi-square test of equal bin probabilities; returns (statistic, p-value)"""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size < 2:
        raise InvalidInputError("uniformity test needs a 1-D histogram with at least 2 bins")
    if counts.sum() <= 0:
        raise InvalidInputError("uniformity test on an empty histogram")
    result = scipy_stats.chisquare(counts)
    return float(result.statistic), float(result.pvalue)


def shift_mse(a: Tensor, b: Tensor, d: int, axis: int = -1) -> float:
    """
    Mean squared difference over the valid region, i.e. everything except the
    first ``d`` cells along ``axis`` that a shift fills from elsewhere.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {b.shape}")
    if not -a.ndim <= axis < a.ndim:
        raise InvalidInputError(f"axis {axis} out of range for {a.ndim}-D tensors")
    extent = a.shape[axis]
    if int(d) != d or not 0 <= d < extent:
        raise InvalidInputError(f"shift d={d} must be an integer in [0, {extent})")
    valid = [slice(None)] * a.ndim
    valid[axis] = slice(int(d), None)
    difference = a[tuple(valid)] - b[tuple(valid)]
    return float(np.mean(difference ** 2))


def diversity(outputs: Sequence[Tensor]) -> float:
    """Mean RMS distance over all unordered pairs of outputs"""
    outputs = [np.asarray(output, dtype=np.float64) for output in outputs]
    if len(outputs) < 2:
        raise InvalidInputError(f"diversity needs at least 2 outputs, got {len(outputs)}")
    if len({output.shape for output in outputs}) > 1:
        raise InvalidInputError("diversity outputs must share one shape")
    distances = [rms_distance(a, b) for a, b in itertools.combinations(outputs, 2)]
    return float(np.mean(distances))


def fraction_where(condition: np.ndarray) -> float:
    """Share of timesteps satisfying ``condition``"""
    condition = np.asarray(condition, dtype=bool)
    return float(condition.mean()) if condition.size else 0.0

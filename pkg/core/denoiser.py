# core/denoiser.py
"""
Closed-form MMSE noise predictors for analytically known data distributions.

Every model predicts E[eps_t | x_t] under the forward marginal
x_t = sqrt(alpha_bar_t) x_0 + sqrt(1 - alpha_bar_t) eps. Tensors may carry leading
batch axes in front of the model's ``data_shape``.
"""

import logging
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from core.errors import (DecompositionError, InvalidModelError,
                         InvalidShapeError, UnknownConditionError)
from core.numerics import (RngStream, Tensor, as_tensor, randn, solve_factored, spd_eigh,
                           spd_factor, spd_logdet)
from core.schedule import Schedule

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
WEIGHT_TOLERANCE = 1e-12
# kernel images are summed out to this many length scales
IMAGE_REACH = 6.0


class DenoiserModel:
    """Base class; subclasses implement the marginal at a given alpha_bar"""

    data_shape: Tuple[int, ...] = ()

    @property
    def data_ndim(self) -> int:
        return len(self.data_shape)

    def batch_shape(self, x: Tensor) -> Tuple[int, ...]:
        x = np.asarray(x)
        if x.shape[x.ndim - self.data_ndim:] != self.data_shape or x.ndim < self.data_ndim:
            raise InvalidShapeError(
                f"tensor shape {x.shape} does not end with model data shape {self.data_shape}")
        return x.shape[:x.ndim - self.data_ndim]

    def eps(self, x: Tensor, alpha_bar: float) -> Tensor:
        raise NotImplementedError

    def log_density(self, x: Tensor, alpha_bar: float) -> Tensor:
        raise NotImplementedError

    def sample(self, rng: RngStream, count: Optional[int] = None) -> Tensor:
        raise NotImplementedError

    def mode(self) -> Tensor:
        """Highest-density data point (the heaviest component's mean for mixtures)"""
        raise NotImplementedError

    def _flat(self, x: Tensor) -> Tensor:
        batch = self.batch_shape(x)
        return np.asarray(x, dtype=np.float64).reshape(batch + (-1,))


class IsotropicGaussian(DenoiserModel):
    def __init__(self, mu, s2: float):
        self.mu = as_tensor(mu, "mean")
        if not s2 > 0:
            raise InvalidModelError(f"isotropic variance must be positive, got {s2}")
        self.s2 = float(s2)
        self.data_shape = self.mu.shape

    def _variance(self, alpha_bar: float) -> float:
        return alpha_bar * self.s2 + (1.0 - alpha_bar)

    def eps(self, x, alpha_bar):
        self.batch_shape(x)
        return np.sqrt(1.0 - alpha_bar) * (x - np.sqrt(alpha_bar) * self.mu) / self._variance(alpha_bar)

    def log_density(self, x, alpha_bar):
        self.batch_shape(x)
        variance = self._variance(alpha_bar)
        residual = self._flat(x - np.sqrt(alpha_bar) * self.mu)
        dim = residual.shape[-1]
        return -0.5 * np.sum(residual ** 2, axis=-1) / variance - 0.5 * dim * (LOG_2PI + np.log(variance))

    def sample(self, rng, count=None):
        shape = self.data_shape if count is None else (count,) + self.data_shape
        return self.mu + np.sqrt(self.s2) * randn(shape, rng)

    def mode(self):
        return self.mu.copy()

    def __repr__(self):
        return f"IsotropicGaussian(shape={self.data_shape}, s2={self.s2})"


class FullGaussian(DenoiserModel):
    def __init__(self, mu, covariance):
        self.mu = as_tensor(mu, "mean")
        self.covariance = as_tensor(covariance, "covariance")
        if self.mu.ndim != 1:
            raise InvalidModelError("full Gaussian mean must be a vector")
        dim = self.mu.shape[0]
        if self.covariance.shape != (dim, dim):
            raise InvalidModelError(f"covariance shape {self.covariance.shape} does not match mean ({dim},)")
        try:
            self._chol = spd_factor(self.covariance)
        except DecompositionError as e:
            raise InvalidModelError(f"covariance is not SPD: {e}") from e
        self.data_shape = (dim,)
        self._factors: Dict[float, tuple] = {}

    def _factor(self, alpha_bar: float):
        factor = self._factors.get(alpha_bar)
        if factor is None:
            dim = self.data_shape[0]
            marginal = alpha_bar * self.covariance + (1.0 - alpha_bar) * np.eye(dim)
            factor = spd_factor(0.5 * (marginal + marginal.T))
            self._factors[alpha_bar] = factor
        return factor

    def eps(self, x, alpha_bar):
        self.batch_shape(x)
        residual = x - np.sqrt(alpha_bar) * self.mu
        return np.sqrt(1.0 - alpha_bar) * solve_factored(self._factor(alpha_bar), residual)

    def log_density(self, x, alpha_bar):
        self.batch_shape(x)
        factor = self._factor(alpha_bar)
        residual = x - np.sqrt(alpha_bar) * self.mu
        quadratic = np.sum(residual * solve_factored(factor, residual), axis=-1)
        return -0.5 * quadratic - 0.5 * (self.data_shape[0] * LOG_2PI + spd_logdet(factor))

    def sample(self, rng, count=None):
        lower = np.tril(self._chol[0])
        shape = self.data_shape if count is None else (count,) + self.data_shape
        return self.mu + randn(shape, rng) @ lower.T

    def mode(self):
        return self.mu.copy()

    def __repr__(self):
        return f"FullGaussian(dim={self.data_shape[0]})"


class PointMass(DenoiserModel):
    """All data at a single point ``c``"""

    def __init__(self, point):
        self.point = as_tensor(point, "point")
        self.data_shape = self.point.shape

    def eps(self, x, alpha_bar):
        self.batch_shape(x)
        return (x - np.sqrt(alpha_bar) * self.point) / np.sqrt(1.0 - alpha_bar)

    def log_density(self, x, alpha_bar):
        self.batch_shape(x)
        variance = 1.0 - alpha_bar
        residual = self._flat(x - np.sqrt(alpha_bar) * self.point)
        dim = residual.shape[-1]
        return -0.5 * np.sum(residual ** 2, axis=-1) / variance - 0.5 * dim * (LOG_2PI + np.log(variance))

    def sample(self, rng, count=None):
        if count is None:
            return self.point.copy()
        return np.broadcast_to(self.point, (count,) + self.data_shape).copy()

    def mode(self):
        return self.point.copy()

    def __repr__(self):
        return f"PointMass(shape={self.data_shape})"


class GMM(DenoiserModel):
    def __init__(self, weights: Sequence[float], components: Sequence[DenoiserModel]):
        self.weights = as_tensor(weights, "weights")
        self.components: List[DenoiserModel] = list(components)
        if self.weights.ndim != 1 or len(self.components) != self.weights.shape[0]:
            raise InvalidModelError("need exactly one weight per mixture component")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise InvalidModelError(f"mixture weights must be nonnegative and sum to 1, got {self.weights}")
        for component in self.components:
            if not isinstance(component, (IsotropicGaussian, FullGaussian)):
                raise InvalidModelError(f"unsupported mixture component {component!r}")
        shapes = {component.data_shape for component in self.components}
        if len(shapes) != 1:
            raise InvalidModelError(f"mixture components disagree on data shape: {shapes}")
        self.data_shape = shapes.pop()
        with np.errstate(divide="ignore"):
            self._log_weights = np.log(self.weights)

    def _component_terms(self, x, alpha_bar) -> np.ndarray:
        return np.stack([log_w + component.log_density(x, alpha_bar)
                         for log_w, component in zip(self._log_weights, self.components)])

    def responsibilities(self, x: Tensor, alpha_bar: float) -> np.ndarray:
        """Posterior component probabilities, component axis first"""
        return softmax(self._component_terms(x, alpha_bar), axis=0)

    def eps(self, x, alpha_bar):
        self.batch_shape(x)
        weights = self.responsibilities(x, alpha_bar)
        weights = weights.reshape(weights.shape + (1,) * self.data_ndim)
        predictions = np.stack([component.eps(x, alpha_bar) for component in self.components])
        return np.sum(weights * predictions, axis=0)

    def log_density(self, x, alpha_bar):
        self.batch_shape(x)
        return logsumexp(self._component_terms(x, alpha_bar), axis=0)

    def sample(self, rng, count=None):
        draws = 1 if count is None else count
        labels = rng.choice(len(self.components), draws, p=self.weights)
        samples = np.empty((draws,) + self.data_shape)
        # components draw from the shared stream in index order
        for index, component in enumerate(self.components):
            chosen = np.flatnonzero(labels == index)
            if chosen.size:
                samples[chosen] = component.sample(rng, chosen.size)
        return samples[0] if count is None else samples

    def mode(self):
        return self.components[int(np.argmax(self.weights))].mode()

    def __repr__(self):
        return f"GMM(components={len(self.components)}, shape={self.data_shape})"


class StationaryField(DenoiserModel):
    """
    Gaussian random field on a periodic grid with a stationary (shift-circulant)
    covariance. The kernel is an anisotropic squared exponential
    ``variance * exp(-q/2)`` summed over periodic images, plus a nugget on the diagonal;
    it is flip-symmetric only when axis-aligned.
    """

    def __init__(self, shape: Sequence[int], variance: float = 1.0,
                 length_scales: Sequence[float] = (3.0, 3.0), angle: float = 0.0,
                 nugget: float = 0.05, mean: float = 0.0):
        self.data_shape = tuple(int(extent) for extent in shape)
        if len(self.data_shape) != 2 or min(self.data_shape) < 1:
            raise InvalidModelError(f"stationary field needs a 2-D grid shape, got {shape}")
        if variance <= 0 or nugget < 0 or min(length_scales) <= 0:
            raise InvalidModelError("field variance and length scales must be positive, nugget nonnegative")
        self.variance = float(variance)
        self.length_scales = tuple(float(scale) for scale in length_scales)
        self.angle = float(angle)
        self.nugget = float(nugget)
        self.mean = float(mean)
        self.covariance = self._build_covariance()
        try:
            self._eigenvalues, self._eigenvectors = spd_eigh(self.covariance)
        except DecompositionError as e:
            raise InvalidModelError(f"field covariance is not SPD: {e}") from e

    @property
    def flip_symmetric(self) -> bool:
        scales_equal = self.length_scales[0] == self.length_scales[1]
        return scales_equal or np.isclose(np.sin(2.0 * self.angle), 0.0)

    def kernel(self, d_row: np.ndarray, d_col: np.ndarray) -> np.ndarray:
        cos, sin = np.cos(self.angle), np.sin(self.angle)
        u = cos * d_row + sin * d_col
        v = -sin * d_row + cos * d_col
        q = (u / self.length_scales[0]) ** 2 + (v / self.length_scales[1]) ** 2
        return self.variance * np.exp(-0.5 * q)

    def _build_covariance(self) -> np.ndarray:
        rows, cols = self.data_shape
        r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        r, c = r.ravel(), c.ravel()

        def cyclic(offset, extent):
            offset = np.mod(offset, extent)
            return np.where(offset > extent / 2, offset - extent, offset)

        d_row = cyclic(r[None, :] - r[:, None], rows)
        d_col = cyclic(c[None, :] - c[:, None], cols)
        # periodic summation over neighbouring images; the min-image kernel alone
        # is not positive definite on grids a few length scales wide
        images = int(np.ceil(IMAGE_REACH * max(self.length_scales) / min(self.data_shape))) + 1
        covariance = np.zeros(d_row.shape)
        for m in range(-images, images + 1):
            for n in range(-images, images + 1):
                covariance += self.kernel(d_row + m * rows, d_col + n * cols)
        # offsets of exactly half the grid are ambiguous in sign
        covariance = 0.5 * (covariance + covariance.T)
        covariance[np.diag_indices_from(covariance)] += self.nugget
        return covariance

    def _scaled(self, x, alpha_bar):
        flat = self._flat(x - np.sqrt(alpha_bar) * self.mean)
        coefficients = flat @ self._eigenvectors
        denominators = alpha_bar * self._eigenvalues + (1.0 - alpha_bar)
        return coefficients, denominators

    def eps(self, x, alpha_bar):
        batch = self.batch_shape(x)
        coefficients, denominators = self._scaled(x, alpha_bar)
        solved = (coefficients / denominators) @ self._eigenvectors.T
        return np.sqrt(1.0 - alpha_bar) * solved.reshape(batch + self.data_shape)

    def log_density(self, x, alpha_bar):
        self.batch_shape(x)
        coefficients, denominators = self._scaled(x, alpha_bar)
        quadratic = np.sum(coefficients ** 2 / denominators, axis=-1)
        return -0.5 * quadratic - 0.5 * np.sum(LOG_2PI + np.log(denominators))

    def sample(self, rng, count=None):
        draws = 1 if count is None else count
        noise = randn((draws, self._eigenvalues.shape[0]), rng)
        flat = (noise * np.sqrt(self._eigenvalues)) @ self._eigenvectors.T + self.mean
        samples = flat.reshape((draws,) + self.data_shape)
        return samples[0] if count is None else samples

    def mode(self):
        return np.full(self.data_shape, self.mean)

    def __repr__(self):
        return (f"StationaryField(shape={self.data_shape}, length_scales={self.length_scales}, "
                f"angle={self.angle})")


class Conditional(DenoiserModel):
    """Condition-keyed family of models sharing one data shape"""

    def __init__(self, members: Mapping[str, DenoiserModel], unconditional: Optional[DenoiserModel] = None):
        if not members:
            raise InvalidModelError("conditional model needs at least one member")
        self.members: Dict[str, DenoiserModel] = {str(label): model for label, model in members.items()}
        self.unconditional = unconditional
        shapes = {model.data_shape for model in self.members.values()}
        if unconditional is not None:
            shapes.add(unconditional.data_shape)
        if len(shapes) != 1:
            raise InvalidModelError(f"conditional members disagree on data shape: {shapes}")
        self.data_shape = shapes.pop()

    def resolve(self, cond: Optional[str]) -> DenoiserModel:
        if cond is None:
            if self.unconditional is None:
                raise InvalidModelError("no condition given and the model has no unconditional member")
            return self.unconditional
        try:
            return self.members[cond]
        except KeyError:
            raise UnknownConditionError(
                f"unknown condition '{cond}' (known: {sorted(self.members)})") from None

    def eps(self, x, alpha_bar):
        return self.resolve(None).eps(x, alpha_bar)

    def log_density(self, x, alpha_bar):
        return self.resolve(None).log_density(x, alpha_bar)

    def sample(self, rng, count=None):
        return self.resolve(None).sample(rng, count)

    def mode(self):
        return self.resolve(None).mode()

    def __repr__(self):
        return f"Conditional(members={sorted(self.members)}, unconditional={self.unconditional is not None})"


def _resolve(model: DenoiserModel, cond: Optional[str]) -> DenoiserModel:
    if isinstance(model, Conditional):
        return model.resolve(cond)
    if cond is not None:
        raise UnknownConditionError(f"model {model!r} is not conditional; got condition '{cond}'")
    return model


def predict_eps(model: DenoiserModel, x_t: Tensor, t: int, schedule: Schedule,
                cond: Optional[str] = None) -> Tensor:
    """E[eps_t | x_t]"""
    alpha_bar = float(schedule.alpha_bar[schedule.check_timestep(t)])
    return _resolve(model, cond).eps(x_t, alpha_bar)


def posterior_x0(model: DenoiserModel, x_t: Tensor, t: int, schedule: Schedule,
                 cond: Optional[str] = None) -> Tensor:
    """E[x_0 | x_t] = (x_t - sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_bar_t)"""
    alpha_bar = float(schedule.alpha_bar[schedule.check_timestep(t)])
    eps = predict_eps(model, x_t, t, schedule, cond)
    return (x_t - np.sqrt(1.0 - alpha_bar) * eps) / np.sqrt(alpha_bar)


def log_marginal(model: DenoiserModel, x_t: Tensor, t: int, schedule: Schedule,
                 cond: Optional[str] = None):
    """Log density of x_t under the forward marginal at timestep t"""
    alpha_bar = float(schedule.alpha_bar[schedule.check_timestep(t)])
    value = _resolve(model, cond).log_density(x_t, alpha_bar)
    return float(value) if np.ndim(value) == 0 else value


def cfg_predict(model: DenoiserModel, x_t: Tensor, t: int, schedule: Schedule,
                cond: str, strength: float) -> Tensor:
    """Classifier-free combination eps_u + w (eps_c - eps_u)"""
    if not isinstance(model, Conditional) or model.unconditional is None:
        raise InvalidModelError("classifier-free guidance needs a conditional model with an unconditional member")
    unconditional = predict_eps(model, x_t, t, schedule, None)
    conditional = predict_eps(model, x_t, t, schedule, cond)
    return unconditional + strength * (conditional - unconditional)


def sample_data(model: DenoiserModel, rng: RngStream, count: Optional[int] = None,
                cond: Optional[str] = None) -> Tensor:
    """Draw x_0 from the model's data distribution"""
    return _resolve(model, cond).sample(rng, count)


def data_mode(model: DenoiserModel, cond: Optional[str] = None) -> Tensor:
    return _resolve(model, cond).mode()


def build_model(declaration: Mapping) -> DenoiserModel:
    """
    Build a model from its config declaration.

    Args:
        declaration (Mapping): dict with a ``type`` key (isotropic_gaussian,
            full_gaussian, gmm, stationary_field, point_mass, conditional) and the
            type's parameters

    Returns:
        DenoiserModel: constructed model

    Raises:
        InvalidModelError: unknown type or malformed parameters
    """
    if not isinstance(declaration, Mapping) or "type" not in declaration:
        raise InvalidModelError(f"model declaration needs a 'type' field: {declaration!r}")
    kind = declaration["type"]
    try:
        if kind == "isotropic_gaussian":
            mean = declaration.get("mean", 0.0)
            shape = declaration.get("shape")
            mu = np.full(tuple(shape), float(mean)) if shape is not None and np.ndim(mean) == 0 else mean
            return IsotropicGaussian(mu, float(declaration.get("variance", 1.0)))
        if kind == "full_gaussian":
            return FullGaussian(declaration["mean"], declaration["covariance"])
        if kind == "point_mass":
            return PointMass(declaration["point"])
        if kind == "gmm":
            components = [build_model(component) for component in declaration["components"]]
            weights = declaration.get("weights") or [1.0 / len(components)] * len(components)
            return GMM(weights, components)
        if kind == "stationary_field":
            scales = declaration.get("length_scales")
            if scales is None:
                scales = [declaration.get("length_scale", 3.0)] * 2
            return StationaryField(
                declaration.get("shape", [32, 32]),
                variance=float(declaration.get("variance", 1.0)),
                length_scales=scales,
                angle=float(np.deg2rad(declaration.get("angle_degrees", 0.0))),
                nugget=float(declaration.get("nugget", 0.05)),
                mean=float(declaration.get("mean", 0.0)),
            )
        if kind == "conditional":
            members = {label: build_model(member) for label, member in declaration["members"].items()}
            unconditional = declaration.get("unconditional")
            return Conditional(members, build_model(unconditional) if unconditional else None)
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidModelError(f"invalid '{kind}' declaration: {e}") from e
    raise InvalidModelError(f"unknown model type '{kind}'")

# core/errors.py

from typing import Any, Dict, Optional


class EditFriendlyError(Exception):
    """Base class for every error raised by the core package"""

    exit_code = 2


class InvalidConfigError(EditFriendlyError, ValueError):
    """Schedule, sampler or experiment parameters out of range"""


class TimestepError(EditFriendlyError, IndexError):
    """Timestep outside [1, T]"""


class UnknownConditionError(EditFriendlyError, KeyError):
    """Condition label not present in a Conditional model"""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the plain message
        return str(self.args[0]) if self.args else ''


class InvalidModelError(EditFriendlyError):
    """Malformed model declaration or unusable model for the request"""


class IncompatibleLatentError(EditFriendlyError):
    """Latent code used with a schedule (or peers) it was not built for"""


class InvalidEditError(EditFriendlyError):
    """Edit specification invalid or inapplicable to a latent"""


class InvalidInputError(EditFriendlyError, ValueError):
    """Statistics called with unusable inputs"""


class LatentFormatError(EditFriendlyError):
    """Latent file has a bad magic number or unsupported version"""


class LatentCorruptionError(EditFriendlyError):
    """Latent file payload truncated or inconsistent with its header"""


class NumericalError(EditFriendlyError):
    """Numerical failure; carries the context needed to reproduce it"""

    exit_code = 3

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.context: Dict[str, Any] = dict(context or {})

    def with_context(self, **context: Any) -> 'NumericalError':
        """Attach extra context (experiment name, timestep, ...) and return self"""
        self.context.update(context)
        return self

    def __str__(self) -> str:
        message = super().__str__()
        if not self.context:
            return message
        details = ', '.join(f"{key}={value}" for key, value in self.context.items())
        return f"{message} ({details})"


class InvalidShapeError(NumericalError, ValueError):
    """Zero extents or mismatched shapes in elementwise arithmetic"""


class NonFiniteError(NumericalError):
    """An operation produced NaN or Inf values"""


class DecompositionError(NumericalError):
    """Cholesky or eigendecomposition failed (input not SPD)"""


class ZeroNoiseError(NumericalError, ZeroDivisionError):
    """Noise extraction attempted at a step whose noise scale is zero"""

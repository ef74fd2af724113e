class HybridRateError(Exception):
    """Base class for library errors."""


class ConfigurationError(HybridRateError, ValueError):
    """Invalid experiment or system parameters."""


class ResourceLimitError(HybridRateError):
    """Requested work exceeds a hard limit (codebook size)."""


class EmptyInputError(HybridRateError, ValueError):
    pass


class InsufficientSamplesError(HybridRateError, ValueError):
    pass


class SingularMatrixError(HybridRateError, ArithmeticError):
    """Pivot fell below the relative tolerance during elimination."""


class DegenerateChannelError(HybridRateError, ArithmeticError):
    """Effective channel has zero norm and cannot be quantized."""


class BoundaryCaseError(HybridRateError, ArithmeticError):
    """Threshold expression sits exactly on its singular boundary."""


class UndefinedThresholdError(HybridRateError, ArithmeticError):
    """Threshold has no finite positive value for these parameters."""

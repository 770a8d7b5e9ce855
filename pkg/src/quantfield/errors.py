"""Exception types shared across the package."""


class QuantFieldError(Exception):
    """Base class for all quantfield errors."""


class NoMassError(QuantFieldError):
    """Local kernel mass at the query point is below the admissible floor."""


class BracketError(QuantFieldError):
    """Quantile root bracket does not straddle the requested level."""


class ZeroDensityError(QuantFieldError):
    """Conditional density at the quantile underflowed; interval undefined."""


class FactorizationError(QuantFieldError):
    """Covariance factorization failed after exhausting the jitter ladder."""


class BandwidthError(QuantFieldError):
    """Cross-validation could not select a bandwidth from the given grid."""


class PredictionError(QuantFieldError):
    """Every prediction target failed; no usable output."""


class ConfigError(QuantFieldError):
    """Invalid configuration, file format, or CLI usage."""

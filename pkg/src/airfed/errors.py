"""Exception types shared across the package."""


class AirfedError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(AirfedError):
    """Invalid configuration value, unknown key, or violated precondition."""


class DomainError(AirfedError):
    """Mathematical domain violation (nonpositive distance, odd dimension, ...)."""


class AdmissibilityError(DomainError):
    """Learning-rate / local-step combination outside the admissible range."""


class DegenerateChannelError(AirfedError):
    """A post-beamforming channel magnitude fell below the numerical floor."""


class AggregationError(AirfedError):
    """Uplink aggregation is near-singular (effective channel sum ~ 0)."""


class EvaluationError(AirfedError):
    """The link-noise penalty is undefined at the requested point."""


class GradientDomainError(EvaluationError):
    """A penalty gradient was requested too close to a singular denominator."""


class FormatError(AirfedError):
    """Malformed external file (dataset, config)."""

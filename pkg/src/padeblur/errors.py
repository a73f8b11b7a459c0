"""Exception types shared across the package."""


class PadeblurError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(PadeblurError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(PadeblurError, ValueError):
    """Invalid configuration value (e.g. even kernel size, unknown key)."""


class SamplingIndexError(PadeblurError, IndexError):
    """A sampling coordinate falls outside the image grid."""


class BudgetError(PadeblurError, ValueError):
    """Requested pixel budget exceeds the number of available pixels."""


class PlanModeError(PadeblurError, ValueError):
    """A sampling plan was used in a mode it was not built for."""


class WiringError(PadeblurError, ValueError):
    """Stage wiring violated (e.g. missing previous-stage features)."""


class UnsupportedOpError(PadeblurError, ValueError):
    """Operation does not support the requested differentiation."""


class BlurSpecError(PadeblurError, ValueError):
    """Invalid synthetic blur field specification."""


class DataError(PadeblurError, ValueError):
    """Dataset or input file problem."""


class NumericError(PadeblurError, FloatingPointError):
    """Non-finite values encountered during training."""

"""Exception taxonomy shared across the package."""


class NdfError(Exception):
    """Base class for all package errors."""


class DimensionError(NdfError, ValueError):
    """Array shapes do not satisfy an operation's contract."""


class NumericError(NdfError, ArithmeticError):
    """A computation produced NaN/Inf or was fed non-finite values."""


class LabelError(NdfError, ValueError):
    """A class label is outside the configured range."""


class ArityError(NdfError, ValueError):
    """Too few samples for a statistical estimator."""


class FormatError(NdfError, ValueError):
    """An external file does not match the required encoding."""


class DegenerateInputError(NdfError, ValueError):
    """Input is valid in shape but meaningless for the operation (e.g. silence)."""


class StateError(NdfError, RuntimeError):
    """Object used before it was fitted/loaded."""


class ConfigError(NdfError, ValueError):
    """Profiles or model configs are inconsistent with each other."""

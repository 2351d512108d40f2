"""Exception types shared across the package."""


class CtopeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CtopeError):
    """Invalid or inconsistent configuration."""


class OverlapError(CtopeError):
    """The target policy has no (or numerically no) support in the logged data."""


class SupportError(CtopeError):
    """A density query falls outside the support of the data."""


class FitError(CtopeError):
    """A model fit failed (rank deficiency, degenerate data, too few samples)."""

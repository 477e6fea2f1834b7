"""Exception types shared across the package.

Every error raised on a contract violation derives from FacestyleError so
callers (CLI, service) can map failures to exit codes / HTTP statuses in one
place.
"""


class FacestyleError(Exception):
    """Base class for all package errors."""


class ConfigError(FacestyleError):
    """Invalid configuration, arguments, or missing required inputs (CLI exit 2)."""


class InvalidCodeError(FacestyleError):
    """A latent code violates its space's shape/content contract."""


class InvalidParameterError(FacestyleError):
    """An operation parameter is out of its documented range."""


class InvalidImageError(FacestyleError):
    """An image tensor/file violates the expected shape, range, or encoding."""


class CheckpointError(FacestyleError):
    """A checkpoint file is missing, truncated, or inconsistent with its manifest."""


class RoleError(FacestyleError):
    """A generator with the wrong role tag was passed to a role-restricted stage."""


class NumericsError(FacestyleError):
    """Training or optimization diverged into non-finite territory (CLI exit 3)."""


class MetricError(FacestyleError):
    """Metric inputs are malformed (dimension mismatch, empty sets, ...)."""

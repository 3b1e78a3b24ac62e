"""Exception hierarchy shared across the package.

Two top-level families matter for the CLI exit codes: anything derived from
:class:`ValidationError` maps to exit code 2, :class:`NumericError` maps to
exit code 3.
"""


class HyperLoRAError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(HyperLoRAError):
    """Bad inputs: malformed files, violated preconditions, shape mismatches."""


class ParseError(ValidationError):
    """A file could not be parsed; message names the offending line."""


class SchemaError(ValidationError):
    """Structurally valid data that violates a cross-record contract
    (inconsistent feature universes, incomparable vectors, ...)."""


class ArgumentError(ValidationError):
    """An in-process call violated a documented precondition."""


class ConfigError(ValidationError):
    """Configuration objects disagree with each other or with supplied data."""


class DegenerateTargetError(ValidationError):
    """The coverage target has zero mass."""


class StaleCacheError(ValidationError):
    """An on-disk cache no longer matches the inputs it claims to cache."""


class NumericError(HyperLoRAError):
    """A computation produced non-finite values or failed to make sense
    numerically; carries a diagnostic of where the problem first appeared."""

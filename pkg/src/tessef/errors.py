"""Exception types shared across the package."""


class TessefError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(TessefError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(TessefError, ValueError):
    """A documented precondition of an operation was violated."""


class ValidityError(ContractError):
    """An event set violates the non-overlap validity rule."""


class FormatError(TessefError, ValueError):
    """A file does not conform to its on-disk format."""


class GenerationError(TessefError, RuntimeError):
    """Synthetic data generation could not satisfy its constraints."""


class ConfigError(TessefError, ValueError):
    """A configuration file or flag set is malformed."""


class VerificationError(TessefError, AssertionError):
    """A self-verification suite reported a failure."""

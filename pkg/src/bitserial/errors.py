"""Exception types shared across the package."""


class BitserialError(Exception):
    """Base class for every error raised by this library."""


class InvalidInputError(BitserialError, ValueError):
    """Input data violates a precondition (non-finite values, empty input)."""


class ShapeError(BitserialError, ValueError):
    """Operand shapes, word spans, or scale counts do not line up."""


class ConfigError(BitserialError, ValueError):
    """A configuration value is unusable (bad tile dims, lane counts, ...)."""


class PolicyMissError(BitserialError, KeyError):
    """A layer kind has no entry in the bit-width policy."""


class FormatError(BitserialError, ValueError):
    """A serialized container or JSON document is malformed or unsupported."""


class BoundsError(BitserialError, ValueError):
    """A simulated memory access falls outside the declared extent."""

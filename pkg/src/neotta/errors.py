"""Exception taxonomy shared across the package.

Everything raised on bad data or bad files derives from NeoError so callers
(and the CLI) can distinguish domain errors from programming mistakes, which
stay plain ValueError/TypeError.
"""


class NeoError(Exception):
    """Base class for all domain errors raised by this package."""


class DimensionMismatch(NeoError):
    """Operands disagree on embedding dimension or class count."""


class NonFiniteInput(NeoError):
    """An in-memory operand contains NaN or Inf."""


class WrongMode(NeoError):
    """An adapter state was passed to an update rule of the other mode."""


class InvalidDimension(NeoError):
    """Requested geometry cannot exist, e.g. embedding dim < num_classes - 1."""


class EmptyClass(NeoError):
    """No samples available for a class that the operation must estimate."""


class ZeroNormVector(NeoError):
    """A vector that must be normalized has (near-)zero norm."""


class NonZeroBias(NeoError):
    """A head that must be bias-free carries a non-zero bias."""


class LengthMismatch(NeoError):
    """Two aligned sequences have different lengths."""


class EmptyInput(NeoError):
    """An operation that needs at least one element got none."""


class OutOfRangeConfidence(NeoError):
    """A confidence value lies outside the half-open interval (0, 1]."""


# --- file ingestion -------------------------------------------------------

class IoFormatError(NeoError):
    """Base class for errors raised while reading or writing files."""


class BadMagic(IoFormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersion(IoFormatError):
    """File declares a version or element type this reader does not know."""


class TruncatedPayload(IoFormatError):
    """File payload is shorter (or longer) than its header declares."""


class NonFiniteValue(IoFormatError):
    """A file being ingested contains NaN or Inf."""


class RaggedRow(IoFormatError):
    """A delimited text file has rows of differing width."""


class ParseError(IoFormatError):
    """A text file could not be parsed into the expected scalars."""


class SchemaMismatch(IoFormatError):
    """A snapshot declares a schema version this reader does not support."""


class CorruptSnapshot(IoFormatError):
    """A snapshot file is structurally broken or missing fields."""


class ManifestError(IoFormatError):
    """A run manifest is malformed or references unresolvable paths."""

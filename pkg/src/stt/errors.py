"""Exception types shared across the package.

Every failure mode promised by a function contract maps to one of these, so
callers (and tests) can tell config mistakes from numeric blowups from broken
files without string-matching messages.
"""


class SttError(Exception):
    """Base class for all package errors."""


class InputError(SttError, ValueError):
    """A caller-supplied value violates a documented precondition."""


class DimensionError(SttError, ValueError):
    """Array shapes are incompatible for the requested operation."""


class ConfigError(SttError, ValueError):
    """A configuration file or geometry is invalid or inconsistent."""


class ContractError(SttError, RuntimeError):
    """An API was used outside its documented contract (e.g. backward on a non-scalar)."""


class NumericError(SttError, ArithmeticError):
    """A computation produced or met a non-finite value."""


class CheckpointError(SttError):
    """Base class for checkpoint file problems."""


class CheckpointCorruptError(CheckpointError):
    """Bad magic, impossible field, or truncated file."""


class CheckpointVersionError(CheckpointError):
    """The file's format version is not supported."""


class CheckpointChecksumError(CheckpointError):
    """Payload bytes do not match the stored digest."""


class CheckpointGeometryError(CheckpointError):
    """Declared geometry disagrees with the stored payload or the caller's model."""


class FeatureFileError(SttError):
    """A precomputed-feature file is malformed."""


class FeatureFormatError(FeatureFileError):
    """Wrong magic number or impossible header field."""


class FeatureVersionError(FeatureFileError):
    """Unsupported feature-file version."""


class FeatureSizeError(FeatureFileError):
    """Payload length disagrees with the header."""

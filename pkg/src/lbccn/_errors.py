"""Exception types shared across the package."""


class LbccnError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(LbccnError, ValueError):
    pass


class ConfigError(LbccnError, ValueError):
    pass


class LengthError(LbccnError, ValueError):
    pass


class NumericError(LbccnError, FloatingPointError):
    pass


class InputError(LbccnError, ValueError):
    pass


class ZeroReferenceError(LbccnError, ValueError):
    """A reference signal has zero energy where a ratio needs it."""


class ContractError(LbccnError, TypeError):
    pass


class CheckpointError(LbccnError):
    pass


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class VariantMismatchError(CheckpointError):
    pass


class WavError(LbccnError):
    pass


class WavFormatError(WavError):
    pass


class UnsupportedCodecError(WavError):
    pass


class WavTruncatedError(WavError):
    pass


class HrirManifestError(LbccnError):
    pass


class MissingHrirFileError(HrirManifestError, FileNotFoundError):
    pass


class InconsistentHrirError(HrirManifestError):
    pass


class DatasetError(LbccnError):
    pass

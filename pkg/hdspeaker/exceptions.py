"""
Exceptions for hdspeaker.

Everything raised by the package derives from HdSpeakerError. DataError and its
subclasses mark problems with input files (audio, datasets, model files); the CLI
maps them to exit code 2.
"""


class HdSpeakerError(Exception):
    """Base exception for hdspeaker errors."""

    pass


class InvalidInputError(HdSpeakerError, ValueError):
    """An argument is outside the domain of the operation."""


class ConfigError(InvalidInputError):
    """A configuration object holds an invalid field."""


class DimensionMismatchError(InvalidInputError):
    """Two vectors that must share a dimension do not."""


class FrameLengthError(InvalidInputError):
    """An analysis frame has the wrong number of samples."""


class UndefinedSimilarityError(HdSpeakerError, ValueError):
    """Cosine similarity is undefined because an input has zero norm."""


class UnclassifiableError(UndefinedSimilarityError):
    """A test profile is the zero vector and cannot be ranked."""


class SilentUtteranceError(HdSpeakerError):
    """An utterance has no spectral power; callers skip it."""


class DataError(HdSpeakerError):
    """Input data (audio, dataset tree, model file) is unusable."""


class EmptyDatasetError(DataError):
    """A dataset root holds no usable speakers."""


class ModelFormatError(DataError):
    """A model file is truncated, corrupt, or of an unknown version."""


class WavError(DataError):
    """Base class for audio files the loader rejects."""


class NotAWavError(WavError):
    """The file is not a RIFF/WAVE container."""


class UnsupportedCodecError(WavError):
    """The WAVE payload is not 16-bit signed PCM."""


class UnsupportedSampleRateError(WavError):
    """The WAVE sample rate is not the pipeline rate."""


class MultiChannelError(WavError):
    """The WAVE file has more than one channel."""

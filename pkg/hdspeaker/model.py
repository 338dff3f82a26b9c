"""
Trained models and the HDSPK1 model file.

A model stores the encoder configuration (including both seeds, from which the
seed memory and permutation are regenerated), one profile and one prototype per
speaker, and the profile of every context: training contexts feed later GLVQ
refinement, reserved (test) contexts are kept for diagnostics and never enter a
speaker profile.

File layout, all little-endian:

    magic "HDSPK1", version u16
    dim u32, ngram_order u8, n_bins u8, alpha f64, weighting u8, p_target f64 (NaN if unset),
    seed_memory u64, permutation_seed u64
    speaker count u32, then per speaker: id (u16 length + UTF-8)
    per speaker: profile f32[dim], prototype f32[dim]
    context count u32, then per context: speaker index u32, id, ngram_count u64,
    reserved u8, vector f32[dim]
"""

from __future__ import annotations

import logging
import math
import struct
from collections.abc import Mapping
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from ._files import atomic_write_bytes
from .encoder import ContextProfile, Encoder, EncoderConfig, SpeakerProfile, WeightingMode
from .exceptions import ConfigError, DataError, InvalidInputError, ModelFormatError
from .glvq import PrototypeSet, init_prototypes

MAGIC = b"HDSPK1"
FORMAT_VERSION = 1
MODEL_SUFFIX = ".hdspk"

_PREAMBLE = struct.Struct("<6sH")
_HEADER = struct.Struct("<IBBdBdQQ")
_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_VECTOR_DTYPE = np.dtype("<f4")

_WEIGHTING_CODES = {
    WeightingMode.NONE: 0,
    WeightingMode.ENERGY: 1,
    WeightingMode.NORMALIZED: 2,
}
_WEIGHTING_BY_CODE = {code: mode for mode, code in _WEIGHTING_CODES.items()}

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ContextEntry:
    speaker_id: str
    context_id: str
    ngram_count: int
    vector: NDArray[np.float32]
    reserved: bool = False


@dataclass(frozen=True, eq=False)
class Model:
    """A trained speaker model. Vectors are float32, the precision the file stores."""

    config: EncoderConfig
    speakers: tuple[str, ...]
    profiles: NDArray[np.float32]
    prototypes: NDArray[np.float32]
    contexts: tuple[ContextEntry, ...] = ()

    def __post_init__(self) -> None:
        expected = (len(self.speakers), self.config.dim)
        for name in ("profiles", "prototypes"):
            matrix = getattr(self, name)
            if matrix.shape != expected:
                raise InvalidInputError(f"{name} must have shape {expected}, got {matrix.shape}")
        if len(set(self.speakers)) != len(self.speakers):
            raise InvalidInputError("Speaker ids must be unique")
        known = set(self.speakers)
        for context in self.contexts:
            if context.speaker_id not in known:
                raise InvalidInputError(
                    f"Context {context.context_id} belongs to unknown speaker {context.speaker_id}"
                )
            if context.vector.shape != (self.config.dim,):
                raise InvalidInputError(
                    f"Context {context.speaker_id}/{context.context_id} vector has shape "
                    f"{context.vector.shape}, expected ({self.config.dim},)"
                )

    @property
    def dim(self) -> int:
        return self.config.dim

    @property
    def n_speakers(self) -> int:
        return len(self.speakers)

    @property
    def stored_parameters(self) -> int:
        """Profile plus prototype values held per speaker."""
        return 2 * self.n_speakers * self.dim

    @property
    def encoding_active_parameters(self) -> int:
        """Values touched per training sample during one-shot encoding: one profile."""
        return self.dim

    @property
    def glvq_active_parameters(self) -> int:
        """Values touched per GLVQ update: two prototypes."""
        return 2 * self.dim

    def encoder(self) -> Encoder:
        return Encoder(self.config)

    def prototype_set(self) -> PrototypeSet:
        return PrototypeSet(self.prototypes.astype(np.float64), self.speakers)

    def with_prototypes(self, protos: PrototypeSet) -> Model:
        if protos.labels != self.speakers:
            raise InvalidInputError("Prototype labels do not match the model's speakers")
        return replace(self, prototypes=protos.prototypes.astype(np.float32))

    @property
    def training_contexts(self) -> tuple[ContextEntry, ...]:
        return tuple(context for context in self.contexts if not context.reserved)

    def context_matrix(self) -> tuple[NDArray[np.float64], list[str]]:
        """Training-context vectors as a (C, D) float64 matrix, with the speaker of each row."""
        contexts = self.training_contexts
        if not contexts:
            return np.zeros((0, self.dim), dtype=np.float64), []
        matrix = np.vstack([context.vector for context in contexts]).astype(np.float64)
        return matrix, [context.speaker_id for context in contexts]


def build_model(
    config: EncoderConfig,
    speaker_profiles: Mapping[str, SpeakerProfile],
    context_profiles: Mapping[tuple[str, str], ContextProfile],
    reserved_profiles: Mapping[tuple[str, str], ContextProfile] | None = None,
) -> Model:
    """Assemble a model with prototypes initialized to the normalized speaker profiles.

    Contexts are stored in (speaker, context) order; reserved_profiles, if given, are
    stored flagged as reserved.

    Raises:
        InvalidInputError: If fewer than two speakers are given
        UndefinedSimilarityError: If a speaker profile is the zero vector
    """
    protos = init_prototypes(speaker_profiles)
    speakers = protos.labels
    profiles = np.vstack([speaker_profiles[speaker].vec.coords for speaker in speakers])
    tagged = [(key, context, False) for key, context in context_profiles.items()]
    tagged += [(key, context, True) for key, context in (reserved_profiles or {}).items()]
    contexts = tuple(
        ContextEntry(
            context.speaker_id,
            context.context_id,
            context.ngram_count,
            context.vec.coords.astype(np.float32),
            reserved,
        )
        for _, context, reserved in sorted(tagged, key=lambda item: item[0])
    )
    return Model(
        config,
        speakers,
        profiles.astype(np.float32),
        protos.prototypes.astype(np.float32),
        contexts,
    )


def _pack_string(value: str) -> bytes:
    encoded = value.encode("utf-8")
    if len(encoded) > 0xFFFF:
        raise InvalidInputError(f"Identifier is too long to store: {value[:40]}...")
    return _U16.pack(len(encoded)) + encoded


def _pack_vector(vector: NDArray[np.floating]) -> bytes:
    return np.ascontiguousarray(vector, dtype=_VECTOR_DTYPE).tobytes()


def model_to_bytes(model: Model) -> bytes:
    cfg = model.config
    p_target = math.nan if cfg.p_target is None else cfg.p_target
    parts = [
        _PREAMBLE.pack(MAGIC, FORMAT_VERSION),
        _HEADER.pack(
            cfg.dim,
            cfg.ngram_order,
            cfg.n_bins,
            cfg.alpha,
            _WEIGHTING_CODES[cfg.weighting],
            p_target,
            cfg.seed_memory_seed,
            cfg.permutation_seed,
        ),
        _U32.pack(model.n_speakers),
    ]
    parts.extend(_pack_string(speaker) for speaker in model.speakers)
    for profile, prototype in zip(model.profiles, model.prototypes, strict=True):
        parts.append(_pack_vector(profile))
        parts.append(_pack_vector(prototype))

    index = {speaker: i for i, speaker in enumerate(model.speakers)}
    parts.append(_U32.pack(len(model.contexts)))
    for context in model.contexts:
        parts.append(_U32.pack(index[context.speaker_id]))
        parts.append(_pack_string(context.context_id))
        parts.append(_U64.pack(context.ngram_count))
        parts.append(_U8.pack(int(context.reserved)))
        parts.append(_pack_vector(context.vector))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, source: str) -> None:
        self._view = memoryview(data)
        self._offset = 0
        self.source = source

    def take(self, size: int) -> memoryview:
        end = self._offset + size
        if end > len(self._view):
            raise ModelFormatError(
                f"Model file {self.source} is truncated at byte {self._offset} "
                f"(needed {size} more bytes)"
            )
        chunk = self._view[self._offset : end]
        self._offset = end
        return chunk

    def unpack(self, schema: struct.Struct) -> tuple[Any, ...]:
        return schema.unpack(self.take(schema.size))

    def u32(self) -> int:
        (value,) = _U32.unpack(self.take(_U32.size))
        return int(value)

    def u64(self) -> int:
        (value,) = _U64.unpack(self.take(_U64.size))
        return int(value)

    def string(self) -> str:
        (length,) = _U16.unpack(self.take(_U16.size))
        try:
            return bytes(self.take(length)).decode("utf-8")
        except UnicodeDecodeError as e:
            raise ModelFormatError(f"Model file {self.source} holds an invalid identifier") from e

    def vector(self, dim: int) -> NDArray[np.float32]:
        raw = self.take(dim * _VECTOR_DTYPE.itemsize)
        return np.frombuffer(raw, dtype=_VECTOR_DTYPE).astype(np.float32)

    @property
    def remaining(self) -> int:
        return len(self._view) - self._offset


def _read_config(reader: _Reader) -> EncoderConfig:
    magic, version = reader.unpack(_PREAMBLE)
    if magic != MAGIC:
        raise ModelFormatError(f"{reader.source} is not an hdspeaker model (bad magic)")
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"{reader.source} has model format version {version}; "
            f"this build reads version {FORMAT_VERSION}"
        )
    dim, order, n_bins, alpha, code, p_target, seed_memory, seed_perm = reader.unpack(_HEADER)
    if code not in _WEIGHTING_BY_CODE:
        raise ModelFormatError(f"{reader.source} has unknown weighting code {code}")
    try:
        return EncoderConfig(
            dim=int(dim),
            ngram_order=int(order),
            alpha=float(alpha),
            weighting=_WEIGHTING_BY_CODE[code],
            p_target=None if math.isnan(p_target) else p_target,
            n_bins=int(n_bins),
            seed_memory_seed=int(seed_memory),
            permutation_seed=int(seed_perm),
        )
    except ConfigError as e:
        raise ModelFormatError(f"{reader.source} holds an invalid header: {e}") from e


def model_from_bytes(data: bytes, source: str = "<bytes>") -> Model:
    """Decode a model file image.

    Raises:
        ModelFormatError: On bad magic, unknown version, truncation, or inconsistent contents
    """
    reader = _Reader(data, source)
    config = _read_config(reader)
    dim = config.dim

    speakers = tuple(reader.string() for _ in range(reader.u32()))
    profiles = np.zeros((len(speakers), dim), dtype=np.float32)
    prototypes = np.zeros((len(speakers), dim), dtype=np.float32)
    for i in range(len(speakers)):
        profiles[i] = reader.vector(dim)
        prototypes[i] = reader.vector(dim)

    contexts = []
    for _ in range(reader.u32()):
        speaker_index = reader.u32()
        if speaker_index >= len(speakers):
            raise ModelFormatError(
                f"{source} references speaker index {speaker_index} of {len(speakers)}"
            )
        context_id = reader.string()
        ngram_count = reader.u64()
        (flag,) = reader.unpack(_U8)
        if flag not in (0, 1):
            raise ModelFormatError(f"{source} has an invalid reserved flag {flag}")
        vector = reader.vector(dim)
        contexts.append(
            ContextEntry(speakers[speaker_index], context_id, ngram_count, vector, bool(flag))
        )

    if reader.remaining:
        raise ModelFormatError(f"{source} has {reader.remaining} unexpected trailing bytes")
    try:
        return Model(config, speakers, profiles, prototypes, tuple(contexts))
    except InvalidInputError as e:
        raise ModelFormatError(f"{source} is inconsistent: {e}") from e


def save_model(model: Model, path: str | Path) -> Path:
    """Write a model file atomically and return its path."""
    path = Path(path)
    atomic_write_bytes(path, model_to_bytes(model))
    logger.info(
        "saved model with %d speakers and %d contexts to %s",
        model.n_speakers,
        len(model.contexts),
        path,
    )
    return path


def load_model(path: str | Path) -> Model:
    """Read a model file.

    Raises:
        DataError: If the file cannot be read
        ModelFormatError: If its contents are not a valid model
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DataError(f"Cannot read model file {path}: {e}") from e
    return model_from_bytes(data, str(path))

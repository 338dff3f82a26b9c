"""
Speech encoder: spectrum slices to weighted N-gram hypervectors to profiles.

A slice is reduced to its local binary pattern (rise/fall between neighbouring
bins), the pattern selects one seed per bin difference, and the thresholded sum
of those seeds is the slice vector S_t. N consecutive slice vectors are permuted
by age and bound into an N-gram, weighted by slice energy, and summed into
context and speaker profiles.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, replace
from enum import StrEnum
from typing import overload

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray

from .dsp import N_BINS, SpectrumSlice, UtteranceSpectra
from .exceptions import (
    ConfigError,
    EmptyDatasetError,
    InvalidInputError,
    SilentUtteranceError,
)
from .vsa import (
    DEFAULT_DIM,
    AccumVector,
    Hypervector,
    Permutation,
    SeedMemory,
    _validate_seed,
    make_permutation,
    make_seed_memory,
    permute,
    threshold,
)

DEFAULT_NGRAM_ORDER = 3
MAX_NGRAM_ORDER = 5
DEFAULT_ALPHA = 0.3
DEFAULT_SEED_MEMORY_SEED = 2022
DEFAULT_PERMUTATION_SEED = 2023
P_TARGET_SPEAKERS = 40

type LbpCode = NDArray[np.uint8]

logger = logging.getLogger(__name__)


class WeightingMode(StrEnum):
    """How slice energy weights each N-gram."""

    NONE = "none"
    ENERGY = "energy"
    NORMALIZED = "normalized"


@dataclass(frozen=True)
class EncoderConfig:
    """Encoder parameters. Together with the two seeds they fix every vector a model holds.

    p_target may stay None until training computes it; normalized weighting needs it
    before anything is encoded.
    """

    dim: int = DEFAULT_DIM
    ngram_order: int = DEFAULT_NGRAM_ORDER
    alpha: float = DEFAULT_ALPHA
    weighting: WeightingMode = WeightingMode.NORMALIZED
    p_target: float | None = None
    n_bins: int = N_BINS
    seed_memory_seed: int = DEFAULT_SEED_MEMORY_SEED
    permutation_seed: int = DEFAULT_PERMUTATION_SEED

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "weighting", WeightingMode(self.weighting))
        except ValueError as e:
            modes = ", ".join(mode.value for mode in WeightingMode)
            raise ConfigError(f"weighting must be one of {modes}, got {self.weighting!r}") from e

        if self.dim < 2:
            raise ConfigError(f"dim must be >= 2, got {self.dim}")
        if not (1 <= self.ngram_order <= MAX_NGRAM_ORDER):
            raise ConfigError(f"ngram_order must be 1-{MAX_NGRAM_ORDER}, got {self.ngram_order}")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ConfigError(f"alpha must be a finite number >= 0, got {self.alpha}")
        if self.p_target is not None and not (
            math.isfinite(self.p_target) and self.p_target > 0
        ):
            raise ConfigError(f"p_target must be a positive finite number, got {self.p_target}")
        if not (2 <= self.n_bins <= N_BINS):
            raise ConfigError(f"n_bins must be 2-{N_BINS}, got {self.n_bins}")
        try:
            _validate_seed(self.seed_memory_seed, "seed_memory_seed")
            _validate_seed(self.permutation_seed, "permutation_seed")
        except InvalidInputError as e:
            raise ConfigError(str(e)) from e

    def with_p_target(self, p_target: float) -> EncoderConfig:
        return replace(self, p_target=p_target)


@dataclass(frozen=True, eq=False)
class WeightedNgram:
    """One N-gram hypervector and its weight (E_{t-N+1} ... E_t)^α, times c_t^{Nα} if normalized."""

    hv: Hypervector
    weight: float


@dataclass(frozen=True, eq=False)
class NgramBatch(Sequence[WeightedNgram]):
    """The N-grams of one utterance as an (M, D) matrix plus M weights."""

    hvs: NDArray[np.int8]
    weights: NDArray[np.float64]

    def __len__(self) -> int:
        return int(self.hvs.shape[0])

    @overload
    def __getitem__(self, index: int) -> WeightedNgram: ...

    @overload
    def __getitem__(self, index: slice) -> NgramBatch: ...

    def __getitem__(self, index: int | slice) -> WeightedNgram | NgramBatch:
        if isinstance(index, slice):
            return NgramBatch(self.hvs[index], self.weights[index])
        return WeightedNgram(self.hvs[index], float(self.weights[index]))

    def profile(self) -> AccumVector:
        """Σ weight·hv over the batch."""
        dim = int(self.hvs.shape[1])
        if len(self) == 0:
            return AccumVector.zeros(dim)
        return AccumVector(self.weights @ self.hvs.astype(np.float64), len(self))


@dataclass(frozen=True, eq=False)
class ContextProfile:
    """V_{s,c}: the summed N-grams of every utterance in one context."""

    speaker_id: str
    context_id: str
    vec: AccumVector

    @property
    def ngram_count(self) -> int:
        return self.vec.count


@dataclass(frozen=True, eq=False)
class SpeakerProfile:
    """V_s: the sum of a speaker's context profiles."""

    speaker_id: str
    vec: AccumVector
    context_ids: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class UtterancePartial:
    """Per-utterance N-gram sum, the unit that profile accumulation merges."""

    speaker_id: str
    context_id: str
    utterance_id: str
    vec: AccumVector


def _bins_of(slice_or_bins: SpectrumSlice | NDArray[np.float64]) -> NDArray[np.float64]:
    if isinstance(slice_or_bins, SpectrumSlice):
        return slice_or_bins.bins
    return np.asarray(slice_or_bins, dtype=np.float64)


def lbp(slice_or_bins: SpectrumSlice | NDArray[np.float64], n_bins: int = N_BINS) -> LbpCode:
    """Local binary pattern of a slice: bit i-1 is 1 iff bins[i] > bins[i-1].

    Equal neighbours give 0. Accepts a (..., 40) array to code many slices at once.
    """
    bins = _bins_of(slice_or_bins)
    if bins.shape[-1] < n_bins:
        raise InvalidInputError(f"Slice must hold at least {n_bins} bins, got {bins.shape[-1]}")
    bins = bins[..., :n_bins]
    return (bins[..., 1:] > bins[..., :-1]).astype(np.uint8)


def encode_slice(code: LbpCode, mem: SeedMemory) -> Hypervector:
    """S_t = θ(Σ_i L_i[code_i]) over the code's bin differences."""
    code = np.asarray(code)
    n = int(code.shape[-1])
    if n > mem.seeds.shape[0]:
        raise InvalidInputError(f"Code has {n} bits but the seed memory holds {mem.seeds.shape[0]}")
    if not np.all((code == 0) | (code == 1)):
        raise InvalidInputError("LBP code bits must be 0 or 1")
    selected = mem.seeds[np.arange(n), code.astype(np.intp)]
    return threshold(selected.sum(axis=0, dtype=np.int32))


def encode_slices(codes: NDArray[np.uint8], mem: SeedMemory) -> NDArray[np.int8]:
    """encode_slice for each row of a (T, n) code matrix, as one matrix product."""
    n = int(codes.shape[-1])
    base, delta = mem.split(n)
    sums = codes.astype(np.float32) @ delta.astype(np.float32)
    return threshold(sums + base.astype(np.float32))


def encode_ngram(
    window: Sequence[Hypervector], perm: Permutation, order: int | None = None
) -> Hypervector:
    """Bind the last N slice vectors, oldest first, the j-th permuted N-1-j times."""
    n = len(window)
    if order is not None and n != order:
        raise InvalidInputError(f"N-gram window must hold {order} vectors, got {n}")
    if not (1 <= n <= MAX_NGRAM_ORDER):
        raise InvalidInputError(f"N-gram window must hold 1-{MAX_NGRAM_ORDER} vectors, got {n}")
    result = np.ones(perm.dim, dtype=np.int8)
    for j, vector in enumerate(window):
        result = result * permute(vector, perm, n - 1 - j)
    return result.astype(np.int8)


def encode_ngrams(
    slice_vectors: NDArray[np.int8], perm: Permutation, order: int
) -> NDArray[np.int8]:
    """All N-grams of a (T, D) slice-vector matrix; T-N+1 rows, none when T < N."""
    total = int(slice_vectors.shape[0])
    count = max(0, total - order + 1)
    result = np.ones((count, perm.dim), dtype=np.int8)
    for j in range(order):
        result *= slice_vectors[j : j + count][:, perm.power(order - 1 - j)]
    return result


def _check_scale(cfg: EncoderConfig, c_t: float) -> None:
    if cfg.weighting is WeightingMode.NORMALIZED and not (math.isfinite(c_t) and c_t > 0):
        raise InvalidInputError(f"c_t must be a positive finite number, got {c_t}")


def slice_weight(energy: float, cfg: EncoderConfig, c_t: float = 1.0) -> float:
    """Weight of one slice: 1, E_t^α, or (c_t·E_t)^α depending on the weighting mode.

    Raises:
        InvalidInputError: If the energy is negative or c_t is invalid in normalized mode
    """
    if not (math.isfinite(energy) and energy >= 0):
        raise InvalidInputError(f"Slice energy must be a finite number >= 0, got {energy}")
    _check_scale(cfg, c_t)
    if cfg.weighting is WeightingMode.NONE:
        return 1.0
    if cfg.weighting is WeightingMode.ENERGY:
        return float(energy**cfg.alpha)
    return float((c_t * energy) ** cfg.alpha)


def slice_weights(
    energy: NDArray[np.float64], cfg: EncoderConfig, c_t: float = 1.0
) -> NDArray[np.float64]:
    """slice_weight over an energy array."""
    if energy.size and not (np.all(np.isfinite(energy)) and energy.min() >= 0):
        raise InvalidInputError("Slice energies must be finite numbers >= 0")
    _check_scale(cfg, c_t)
    if cfg.weighting is WeightingMode.NONE:
        return np.ones_like(energy, dtype=np.float64)
    scale = c_t if cfg.weighting is WeightingMode.NORMALIZED else 1.0
    return np.power(scale * energy, cfg.alpha)


def ngram_weights(weights: NDArray[np.float64], order: int) -> NDArray[np.float64]:
    """Product of the N slice weights under each N-gram window."""
    if len(weights) < order:
        return np.zeros(0, dtype=np.float64)
    return sliding_window_view(weights, order).prod(axis=1)


def context_scale(p_target: float, p_max_utterance: float) -> float:
    """c_t = P_target / P_max,utterance.

    Raises:
        SilentUtteranceError: If the utterance has no power; callers skip it
        InvalidInputError: If p_target is not positive
    """
    if not (math.isfinite(p_target) and p_target > 0):
        raise InvalidInputError(f"p_target must be a positive finite number, got {p_target}")
    if not (math.isfinite(p_max_utterance) and p_max_utterance > 0):
        raise SilentUtteranceError(
            f"Utterance maximum bin power is {p_max_utterance}; nothing to normalize"
        )
    return p_target / p_max_utterance


def compute_p_target(
    speaker_maxima: Mapping[str, Sequence[float]],
    override: float | None = None,
    n_speakers: int = P_TARGET_SPEAKERS,
) -> float:
    """Average, over the first `n_speakers` speakers in sorted id order, of each
    speaker's largest bin power across their training utterances.

    Args:
        speaker_maxima: Per speaker, the max bin power of each training utterance
        override: Configured constant that replaces the computed value
        n_speakers: How many speakers to average over (all when fewer)

    Raises:
        EmptyDatasetError: If no speaker has any utterance
    """
    if override is not None:
        if not (math.isfinite(override) and override > 0):
            raise InvalidInputError(f"p_target must be a positive finite number, got {override}")
        return float(override)

    per_speaker = [
        max(speaker_maxima[speaker])
        for speaker in sorted(speaker_maxima)
        if len(speaker_maxima[speaker]) > 0
    ][:n_speakers]
    if not per_speaker:
        raise EmptyDatasetError("No training utterances to compute p_target from")
    return float(np.mean(per_speaker))


def encode_utterance(
    spectra: UtteranceSpectra,
    cfg: EncoderConfig,
    mem: SeedMemory,
    perm: Permutation,
    c_t: float | None = None,
) -> NgramBatch:
    """Weighted N-grams of one utterance.

    One N-gram per t >= N-1, never spanning utterances. In normalized mode c_t
    defaults to context_scale(cfg.p_target, spectra.max_bin_power).

    Raises:
        ConfigError: If normalized weighting is requested without a p_target
        SilentUtteranceError: If normalized weighting meets a silent utterance
    """
    if c_t is None:
        c_t = 1.0
        if cfg.weighting is WeightingMode.NORMALIZED:
            if cfg.p_target is None:
                raise ConfigError("normalized weighting needs p_target")
            c_t = context_scale(cfg.p_target, spectra.max_bin_power)

    codes = lbp(spectra.bins, cfg.n_bins)
    slice_vectors = encode_slices(codes, mem)
    hvs = encode_ngrams(slice_vectors, perm, cfg.ngram_order)
    weights = ngram_weights(slice_weights(spectra.energy, cfg, c_t), cfg.ngram_order)
    return NgramBatch(hvs, weights)


class Encoder:
    """An EncoderConfig with its seed memory and permutation materialized."""

    def __init__(
        self,
        config: EncoderConfig,
        seed_memory: SeedMemory | None = None,
        permutation: Permutation | None = None,
    ) -> None:
        self.config = config
        self.seed_memory = seed_memory or make_seed_memory(config.seed_memory_seed, config.dim)
        self.permutation = permutation or make_permutation(config.permutation_seed, config.dim)

    def with_p_target(self, p_target: float) -> Encoder:
        return Encoder(self.config.with_p_target(p_target), self.seed_memory, self.permutation)

    def encode(self, spectra: UtteranceSpectra, c_t: float | None = None) -> NgramBatch:
        return encode_utterance(spectra, self.config, self.seed_memory, self.permutation, c_t)

    def profile(self, spectra: UtteranceSpectra) -> AccumVector:
        """The utterance's N-gram sum."""
        return self.encode(spectra).profile()


def accumulate_profiles(
    partials: Iterable[UtterancePartial],
) -> tuple[dict[tuple[str, str], ContextProfile], dict[str, SpeakerProfile]]:
    """Sum utterance partials into context profiles, and those into speaker profiles.

    Partials are merged in sorted (speaker, context, utterance) order, so the result
    does not depend on the order they were produced in.
    """
    ordered = sorted(partials, key=lambda p: (p.speaker_id, p.context_id, p.utterance_id))

    contexts: dict[tuple[str, str], ContextProfile] = {}
    for partial in ordered:
        key = (partial.speaker_id, partial.context_id)
        existing = contexts.get(key)
        vec = partial.vec if existing is None else existing.vec + partial.vec
        contexts[key] = ContextProfile(partial.speaker_id, partial.context_id, vec)

    speakers: dict[str, SpeakerProfile] = {}
    for (speaker_id, context_id), context in contexts.items():
        current = speakers.get(speaker_id)
        if current is None:
            speakers[speaker_id] = SpeakerProfile(speaker_id, context.vec, (context_id,))
        else:
            speakers[speaker_id] = SpeakerProfile(
                speaker_id, current.vec + context.vec, (*current.context_ids, context_id)
            )

    logger.debug("accumulated %d contexts for %d speakers", len(contexts), len(speakers))
    return contexts, speakers

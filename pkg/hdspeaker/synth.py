"""
Synthetic speakers: noise driven through three formant resonators.

Each speaker owns a formant triple taken from a grid whose members differ in at
least two steps, plus a pitch used when voicing is enabled. Contexts vary the
recording gain and shift the formants slightly; optional silence padding adds
exact-zero stretches before and after each utterance. Everything is drawn from
seeded generators, so a corpus is a pure function of its SynthConfig.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy import signal
from tqdm import tqdm

from .dsp import SAMPLE_RATE, AudioClip, write_wav
from .exceptions import ConfigError, InvalidInputError
from .vsa import _validate_seed, make_rng

F1_GRID = (400.0, 800.0)
F2_GRID = (1200.0, 1600.0, 2000.0, 2400.0)
F3_GRID = (2800.0, 3200.0, 3600.0, 4000.0)
FORMANT_BANDWIDTH = 80.0
SYLLABLE_RATE = 4.0
NOISE_FLOOR = 1e-4
TARGET_RMS = 0.1

logger = logging.getLogger(__name__)


def formant_grid() -> list[tuple[float, float, float]]:
    """Formant triples whose grid indices sum to an even number (pairwise distance >= 2)."""
    return [
        (f1, f2, f3)
        for (i, f1), (j, f2), (k, f3) in itertools.product(
            enumerate(F1_GRID), enumerate(F2_GRID), enumerate(F3_GRID)
        )
        if (i + j + k) % 2 == 0
    ]


@dataclass(frozen=True)
class SynthConfig:
    n_speakers: int = 10
    n_contexts: int = 3
    utterances_per_context: int = 5
    seconds: float = 3.0
    silence_seconds: float = 0.0
    voicing: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        limit = len(formant_grid())
        if not (1 <= self.n_speakers <= limit):
            raise ConfigError(f"n_speakers must be 1-{limit}, got {self.n_speakers}")
        if self.n_contexts < 1:
            raise ConfigError(f"n_contexts must be >= 1, got {self.n_contexts}")
        if self.utterances_per_context < 1:
            raise ConfigError(
                f"utterances_per_context must be >= 1, got {self.utterances_per_context}"
            )
        if not (math.isfinite(self.seconds) and self.seconds > 0):
            raise ConfigError(f"seconds must be positive, got {self.seconds}")
        if not (math.isfinite(self.silence_seconds) and self.silence_seconds >= 0):
            raise ConfigError(f"silence_seconds must be >= 0, got {self.silence_seconds}")
        if not (0.0 <= self.voicing <= 1.0):
            raise ConfigError(f"voicing must be within [0, 1], got {self.voicing}")
        try:
            _validate_seed(self.seed, "seed")
        except InvalidInputError as e:
            raise ConfigError(str(e)) from e


@dataclass(frozen=True)
class SyntheticSpeaker:
    index: int
    speaker_id: str
    formants: tuple[float, float, float]
    f0: float


def speaker_id_for(index: int) -> str:
    return f"id{10001 + index}"


def context_id_for(index: int) -> str:
    return f"ctx{index + 1:02d}"


def utterance_name_for(index: int) -> str:
    return f"{index + 1:05d}.wav"


def make_speakers(cfg: SynthConfig) -> list[SyntheticSpeaker]:
    rng = make_rng((cfg.seed, 0))
    grid = formant_grid()
    chosen = rng.choice(len(grid), size=cfg.n_speakers, replace=False)
    pitches = rng.uniform(110.0, 220.0, size=cfg.n_speakers)
    return [
        SyntheticSpeaker(i, speaker_id_for(i), grid[int(g)], float(f0))
        for i, (g, f0) in enumerate(zip(chosen, pitches, strict=True))
    ]


def _resonate(x: NDArray[np.float64], frequency: float, bandwidth: float) -> NDArray[np.float64]:
    r = math.exp(-math.pi * bandwidth / SAMPLE_RATE)
    theta = 2.0 * math.pi * frequency / SAMPLE_RATE
    poles = [1.0, -2.0 * r * math.cos(theta), r * r]
    result: NDArray[np.float64] = signal.lfilter([1.0 - r], poles, x)
    return result


def _excitation(
    rng: np.random.Generator, n: int, f0: float, voicing: float
) -> NDArray[np.float64]:
    noise = rng.standard_normal(n)
    if voicing == 0.0:
        return noise
    pulses = np.zeros(n)
    position = 0.0
    while position < n:
        pulses[int(position)] = 1.0
        position += SAMPLE_RATE / (f0 * rng.uniform(0.97, 1.03))
    pulses *= math.sqrt(SAMPLE_RATE / f0)
    return voicing * pulses + (1.0 - voicing) * noise


def synthesize_utterance(
    speaker: SyntheticSpeaker,
    cfg: SynthConfig,
    context_index: int,
    utterance_index: int,
) -> AudioClip:
    """Render one utterance; the result depends only on its arguments."""
    context_rng = make_rng((cfg.seed, 1, speaker.index, context_index))
    gain = context_rng.uniform(0.1, 0.8)
    shift = context_rng.uniform(0.98, 1.02)

    rng = make_rng((cfg.seed, 2, speaker.index, context_index, utterance_index))
    n = round(cfg.seconds * SAMPLE_RATE)
    x = _excitation(rng, n, speaker.f0, cfg.voicing)
    for formant in speaker.formants:
        x = _resonate(x, formant * shift, FORMANT_BANDWIDTH)

    t = np.arange(n) / SAMPLE_RATE
    phase = rng.uniform(0.0, 2.0 * math.pi)
    x *= 0.2 + 0.8 * (0.5 - 0.5 * np.cos(2.0 * math.pi * SYLLABLE_RATE * t + phase))

    rms = float(np.sqrt(np.mean(x * x)))
    if rms > 0:
        x *= gain * TARGET_RMS / rms
    x += NOISE_FLOOR * rng.standard_normal(n)

    if cfg.silence_seconds > 0:
        total = round(cfg.silence_seconds * rng.uniform(0.5, 1.5) * SAMPLE_RATE)
        before = int(rng.integers(0, total + 1))
        x = np.concatenate([np.zeros(before), x, np.zeros(total - before)])
    return AudioClip(np.clip(x, -1.0, 32767 / 32768), SAMPLE_RATE)


def write_corpus(root: str | Path, cfg: SynthConfig, progress: bool = False) -> list[Path]:
    """Write root/<speaker>/<context>/<utterance>.wav for every synthetic speaker.

    Returns:
        Paths of the written files, in speaker/context/utterance order
    """
    root = Path(root)
    speakers = make_speakers(cfg)
    written = []
    for speaker in tqdm(speakers, desc="synthesizing", disable=not progress):
        for c in range(cfg.n_contexts):
            context_dir = root / speaker.speaker_id / context_id_for(c)
            context_dir.mkdir(parents=True, exist_ok=True)
            for u in range(cfg.utterances_per_context):
                path = context_dir / utterance_name_for(u)
                write_wav(path, synthesize_utterance(speaker, cfg, c, u))
                written.append(path)
    logger.info("wrote %d utterances for %d speakers under %s", len(written), len(speakers), root)
    return written

"""
Audio ingestion and short-window spectral analysis.

Audio is 16 kHz mono 16-bit PCM. Each analysis frame is 5 ms (80 samples) under a
periodic Hann window, frames start every 20 ms (320 samples), and an 80-point real
DFT gives 40 retained power bins spaced 200 Hz apart.
"""

from __future__ import annotations

import logging
import struct
import warnings
from dataclasses import dataclass
from functools import cache
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray
from scipy import fft, signal
from scipy.io import wavfile

from .exceptions import (
    FrameLengthError,
    HdSpeakerError,
    MultiChannelError,
    NotAWavError,
    UnsupportedCodecError,
    UnsupportedSampleRateError,
    WavError,
)

SAMPLE_RATE = 16_000
WINDOW_MS = 5
HOP_MS = 20
N_BINS = 40
PCM_SCALE = 32768.0

_MALFORMED_MARKERS = (
    "not understood",
    "Not a WAV",
    "RIFF",
    "end of file",
    "chunk",
    "not compliant",
    "header is invalid",
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono samples in [-1, 1] at `sample_rate` Hz."""

    samples: NDArray[np.float64]
    sample_rate: int = SAMPLE_RATE

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return len(self.samples) / self.sample_rate

    def __add__(self, other: AudioClip) -> AudioClip:
        if other.sample_rate != self.sample_rate:
            raise UnsupportedSampleRateError(
                f"Cannot join clips at {self.sample_rate} Hz and {other.sample_rate} Hz"
            )
        return AudioClip(np.concatenate([self.samples, other.samples]), self.sample_rate)


@dataclass(frozen=True, eq=False)
class SpectrumSlice:
    """Power in the 40 retained bins of one frame, plus the frame energy E_t."""

    bins: NDArray[np.float64]
    energy: float
    t_index: int = 0


@dataclass(frozen=True, eq=False)
class UtteranceSpectra:
    """All slices of an utterance, stored as a (T, 40) power matrix."""

    bins: NDArray[np.float64]
    energy: NDArray[np.float64]
    hop_ms: int = HOP_MS

    def __len__(self) -> int:
        return int(self.bins.shape[0])

    @property
    def max_bin_power(self) -> float:
        """P_max,utterance: the largest bin power over all slices (0 when empty)."""
        return float(self.bins.max()) if self.bins.size else 0.0

    @property
    def mean_bin_power(self) -> NDArray[np.float64]:
        """Average power per bin over the utterance."""
        if not self.bins.size:
            return np.zeros(self.bins.shape[-1], dtype=np.float64)
        return self.bins.mean(axis=0)

    @property
    def duration(self) -> float:
        """Audio seconds covered by the slice grid (one hop per slice)."""
        return len(self) * self.hop_ms / 1000.0

    @property
    def slices(self) -> list[SpectrumSlice]:
        return [
            SpectrumSlice(self.bins[t], float(self.energy[t]), t) for t in range(len(self))
        ]

    def frame_starts(self, sample_rate: int = SAMPLE_RATE) -> NDArray[np.float64]:
        """Start time in seconds of each slice."""
        hop = sample_rate * self.hop_ms // 1000
        return np.arange(len(self)) * hop / sample_rate


def _samples_per(ms: int, sample_rate: int) -> int:
    return sample_rate * ms // 1000


@cache
def hann_window(length: int) -> NDArray[np.float64]:
    """Periodic Hann window w[n] = 0.5 (1 - cos(2πn/length))."""
    window: NDArray[np.float64] = signal.get_window("hann", length, fftbins=True)
    window.setflags(write=False)
    return window


def load_wav(path: str | Path) -> AudioClip:
    """Load a 16 kHz mono 16-bit PCM WAVE file.

    Args:
        path: Path to the .wav file

    Returns:
        AudioClip with samples scaled to [-1, 1] by dividing by 32768

    Raises:
        WavError: If the file is missing or unreadable
        NotAWavError: If the file is not RIFF/WAVE
        UnsupportedCodecError: If the payload is not 16-bit signed PCM
        MultiChannelError: If the file has more than one channel
        UnsupportedSampleRateError: If the rate is not 16 kHz
    """
    path = Path(path)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError as e:
        raise WavError(f"Audio file not found: {path}") from e
    except EOFError as e:
        raise NotAWavError(f"Truncated RIFF/WAVE file: {path}") from e
    except OSError as e:
        raise WavError(f"Cannot read audio file {path}: {e}") from e
    except struct.error as e:
        raise NotAWavError(f"Truncated RIFF/WAVE header in {path}: {e}") from e
    except ValueError as e:
        message = str(e)
        if any(marker in message for marker in _MALFORMED_MARKERS):
            raise NotAWavError(f"Not a RIFF/WAVE file: {path} ({message})") from e
        raise UnsupportedCodecError(f"Unsupported WAVE encoding in {path}: {message}") from e
    except Exception as e:
        # scipy leaves locals unbound when a header announces no chunks
        raise NotAWavError(f"Malformed RIFF/WAVE file: {path} ({type(e).__name__})") from e

    if data.dtype != np.int16:
        raise UnsupportedCodecError(
            f"Expected 16-bit signed PCM in {path}, got sample type {data.dtype}"
        )
    if data.ndim == 2:
        if data.shape[1] != 1:
            raise MultiChannelError(f"Expected mono audio in {path}, got {data.shape[1]} channels")
        data = data[:, 0]
    if rate != SAMPLE_RATE:
        raise UnsupportedSampleRateError(
            f"Expected {SAMPLE_RATE} Hz audio in {path}, got {rate} Hz"
        )

    return AudioClip(data.astype(np.float64) / PCM_SCALE, int(rate))


def write_wav(path: str | Path, clip: AudioClip) -> None:
    """Write a clip as 16-bit PCM, clipping to the representable range."""
    pcm = np.clip(np.round(clip.samples * PCM_SCALE), -32768, 32767).astype(np.int16)
    wavfile.write(Path(path), clip.sample_rate, pcm)


def frame_stream(
    clip: AudioClip, window_ms: int = WINDOW_MS, hop_ms: int = HOP_MS
) -> NDArray[np.float64]:
    """Cut a clip into analysis frames.

    Frame k covers samples [k*hop, k*hop + window); a trailing partial window is
    dropped. A clip shorter than one window yields an empty (0, window) array.
    """
    window = _samples_per(window_ms, clip.sample_rate)
    hop = _samples_per(hop_ms, clip.sample_rate)
    if window <= 0 or hop <= 0:
        raise FrameLengthError(f"Window and hop must be positive, got {window_ms}/{hop_ms} ms")
    if len(clip.samples) < window:
        return np.empty((0, window), dtype=np.float64)
    return sliding_window_view(clip.samples, window)[::hop]


def _power_bins(frames: NDArray[np.float64], n_bins: int = N_BINS) -> NDArray[np.float64]:
    spectrum = fft.rfft(frames * hann_window(frames.shape[-1]), axis=-1)
    return np.square(np.abs(spectrum[..., :n_bins]))


def power_spectrum(frame: NDArray[np.float64], t_index: int = 0) -> SpectrumSlice:
    """Hann-windowed 80-point power spectrum of one frame, first 40 bins.

    Raises:
        FrameLengthError: If the frame is not exactly 80 samples
    """
    frame = np.asarray(frame, dtype=np.float64)
    expected = _samples_per(WINDOW_MS, SAMPLE_RATE)
    if frame.shape != (expected,):
        raise FrameLengthError(f"Frame must hold {expected} samples, got shape {frame.shape}")
    bins = _power_bins(frame)
    return SpectrumSlice(bins, float(bins.sum()), t_index)


def analyze_utterance(clip: AudioClip) -> UtteranceSpectra:
    """Power spectra for every frame of a clip, with E_t summed over the 40 bins."""
    if clip.sample_rate != SAMPLE_RATE:
        raise UnsupportedSampleRateError(
            f"Expected {SAMPLE_RATE} Hz audio, got {clip.sample_rate} Hz"
        )
    frames = frame_stream(clip)
    if len(frames) == 0:
        bins = np.zeros((0, N_BINS), dtype=np.float64)
    else:
        bins = _power_bins(frames)
    return UtteranceSpectra(bins, bins.sum(axis=1), HOP_MS)


def analyze_file(path: str | Path) -> UtteranceSpectra:
    """load_wav followed by analyze_utterance."""
    try:
        return analyze_utterance(load_wav(path))
    except WavError:
        raise
    except HdSpeakerError as e:
        raise WavError(f"Cannot analyze {path}: {e}") from e

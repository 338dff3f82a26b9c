"""
Training, evaluation and refinement over an indexed dataset.

Utterance loading, analysis and encoding fan out to a thread pool; results come
back in submission order, so profile merging and GLVQ stay single-threaded and
deterministic. Files that fail to load are skipped with a warning unless the
source is strict.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import time
from collections.abc import Callable, Iterable, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from tqdm import tqdm

from .dataset import DatasetIndex
from .dsp import UtteranceSpectra, analyze_utterance, load_wav
from .encoder import (
    P_TARGET_SPEAKERS,
    Encoder,
    EncoderConfig,
    UtterancePartial,
    WeightingMode,
    accumulate_profiles,
    compute_p_target,
)
from .evaluation import TOP_KS, EvalReport, build_report, classify_many, topk_accuracy
from .exceptions import DataError, SilentUtteranceError, WavError
from .glvq import EpochStats, GlvqConfig, PrototypeSet, TopK
from .glvq import train as glvq_train
from .model import Model, build_model
from .vsa import AccumVector

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AnalyzedAudio:
    spectra: UtteranceSpectra
    seconds: float


@dataclass(frozen=True, eq=False)
class _Outcome[R]:
    """Result of per-file work, or the reason the file is unusable."""

    path: Path
    value: R | None
    seconds: float = 0.0
    elapsed: float = 0.0
    error: str | None = None


@dataclass
class AudioSource:
    """Loads and analyzes utterances, optionally in parallel and with a cache.

    Attributes:
        workers: Thread count for per-utterance work (1 runs inline)
        strict: Raise on the first unusable file instead of skipping it
        progress: Show tqdm progress bars
        cache: Keep analyzed spectra in memory for reuse across runs (sweeps)
    """

    workers: int = 1
    strict: bool = False
    progress: bool = False
    cache: bool = False
    skipped: list[tuple[Path, str]] = field(default_factory=list)
    _spectra: dict[Path, AnalyzedAudio] = field(default_factory=dict, repr=False)

    def analyze(self, path: Path) -> AnalyzedAudio:
        """Load and analyze one file. WavError propagates."""
        cached = self._spectra.get(path)
        if cached is not None:
            return cached
        clip = load_wav(path)
        analyzed = AnalyzedAudio(analyze_utterance(clip), clip.duration)
        if self.cache:
            self._spectra[path] = analyzed
        return analyzed

    def map[T, R](self, fn: Callable[[T], R], items: Sequence[T], desc: str) -> Iterator[R]:
        """Apply fn to every item on the worker pool, yielding results in item order."""
        if self.workers <= 1:
            results: Iterable[R] = map(fn, items)
            yield from tqdm(results, total=len(items), desc=desc, disable=not self.progress)
            return
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            results = pool.map(fn, items)
            yield from tqdm(results, total=len(items), desc=desc, disable=not self.progress)

    def skip(self, path: Path, reason: str) -> None:
        """Record an unusable file once; raises DataError when strict."""
        if self.strict:
            raise DataError(f"{path}: {reason}")
        if any(seen == path for seen, _ in self.skipped):
            return
        logger.warning("skipping %s: %s", path, reason)
        self.skipped.append((path, reason))


@dataclass(frozen=True)
class TrainReport:
    """Timing and bookkeeping of one training run, kept beside the model file."""

    phases: dict[str, float]
    audio_seconds: float
    n_utterances: int
    p_target: float | None
    active_parameters: int
    skipped: tuple[tuple[str, str], ...] = ()

    @property
    def train_seconds(self) -> float:
        return sum(self.phases.values())

    @property
    def realtime_factor(self) -> float:
        """Audio seconds processed per second of training."""
        seconds = self.train_seconds
        return self.audio_seconds / seconds if seconds > 0 else math.inf

    def summary(self) -> str:
        lines = [f"{name:<12} {seconds:8.3f} s" for name, seconds in self.phases.items()]
        lines.append(f"{'total':<12} {self.train_seconds:8.3f} s")
        lines.append(
            f"audio        {self.audio_seconds:8.1f} s in {self.n_utterances} utterances "
            f"({self.realtime_factor:.1f}x real time)"
        )
        if self.skipped:
            lines.append(f"skipped      {len(self.skipped)} files")
        return "\n".join(lines)

    def to_json(self) -> str:
        values = asdict(self)
        values["skipped"] = [list(item) for item in self.skipped]
        values["train_seconds"] = self.train_seconds
        values["realtime_factor"] = self.realtime_factor
        return json.dumps(values, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> TrainReport:
        try:
            values = json.loads(text)
            return cls(
                phases={str(k): float(v) for k, v in values["phases"].items()},
                audio_seconds=float(values["audio_seconds"]),
                n_utterances=int(values["n_utterances"]),
                p_target=None if values["p_target"] is None else float(values["p_target"]),
                active_parameters=int(values["active_parameters"]),
                skipped=tuple((str(p), str(r)) for p, r in values.get("skipped", [])),
            )
        except (ValueError, KeyError, TypeError, AttributeError) as e:
            raise DataError(f"Invalid training report: {e}") from e


def sidecar_path(model_path: str | Path) -> Path:
    """Where the training report for a model file lives."""
    model_path = Path(model_path)
    return model_path.with_name(model_path.name + ".train.json")


class PhaseTimer:
    """Wall-clock seconds per named phase, in the order phases ran."""

    def __init__(self) -> None:
        self.phases: dict[str, float] = {}

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.phases[name] = self.phases.get(name, 0.0) + elapsed
            logger.info("%s took %.3f s", name, elapsed)


def _peak(source: AudioSource, path: Path) -> _Outcome[float]:
    try:
        return _Outcome(path, source.analyze(path).spectra.max_bin_power)
    except WavError as e:
        return _Outcome(path, None, error=str(e))


def _speaker_maxima(
    index: DatasetIndex, source: AudioSource, n_speakers: int = P_TARGET_SPEAKERS
) -> dict[str, list[float]]:
    """Max bin power of each training utterance, for the first speakers that have any."""
    maxima: dict[str, list[float]] = {}
    for speaker_id, entry in index.speakers.items():
        if len(maxima) >= n_speakers:
            break
        paths = [path for _, path in entry.train_utterances()]
        values = []
        for outcome in source.map(lambda p: _peak(source, p), paths, f"peaks {speaker_id}"):
            if outcome.value is None:
                source.skip(outcome.path, outcome.error or "unusable")
            else:
                values.append(outcome.value)
        if values:
            maxima[speaker_id] = values
    return maxima


def _encode_file(encoder: Encoder, source: AudioSource, path: Path) -> _Outcome[AccumVector]:
    start = time.perf_counter()
    try:
        audio = source.analyze(path)
    except WavError as e:
        return _Outcome(path, None, error=str(e))
    try:
        vec = encoder.profile(audio.spectra)
    except SilentUtteranceError as e:
        return _Outcome(path, None, audio.seconds, error=f"silent utterance: {e}")
    return _Outcome(path, vec, audio.seconds, time.perf_counter() - start)


def train_model(
    index: DatasetIndex,
    config: EncoderConfig,
    source: AudioSource | None = None,
    timer: PhaseTimer | None = None,
) -> tuple[Model, TrainReport]:
    """One pass over every context: analyze, encode, accumulate.

    Speaker profiles sum the training contexts only. Reserved test contexts are
    encoded in the same pass and stored in the model, flagged, for diagnostics.

    In normalized mode without a configured p_target, it is first computed from the
    training utterances of the first 40 speakers.

    Args:
        index: Dataset index with the split applied
        config: Encoder configuration
        source: Audio loader (default: inline, not strict)
        timer: Timer to add phases to, so callers can time their own phases alongside

    Raises:
        DataError: If fewer than two speakers end up with a usable profile
    """
    source = source or AudioSource()
    timer = timer or PhaseTimer()
    skipped_before = len(source.skipped)

    if config.weighting is WeightingMode.NORMALIZED and config.p_target is None:
        with timer.phase("p_target"):
            p_target = compute_p_target(_speaker_maxima(index, source))
        config = config.with_p_target(p_target)
        logger.info("p_target = %.6g", p_target)

    encoder = Encoder(config)
    jobs = [
        (speaker_id, context_id, path, context_id == entry.test_context)
        for speaker_id, entry in index.speakers.items()
        for context_id, paths in entry.contexts.items()
        for path in paths
    ]

    partials: list[UtterancePartial] = []
    reserved_partials: list[UtterancePartial] = []
    audio_seconds = 0.0
    with timer.phase("encode"):
        outcomes = source.map(lambda job: _encode_file(encoder, source, job[2]), jobs, "encoding")
        for (speaker_id, context_id, path, reserved), outcome in zip(jobs, outcomes, strict=True):
            audio_seconds += outcome.seconds
            if outcome.value is None:
                source.skip(path, outcome.error or "unusable")
                continue
            partial = UtterancePartial(speaker_id, context_id, path.name, outcome.value)
            (reserved_partials if reserved else partials).append(partial)

    with timer.phase("accumulate"):
        contexts, speakers = accumulate_profiles(partials)
        reserved_contexts, _ = accumulate_profiles(reserved_partials)
        for speaker_id in [s for s, p in speakers.items() if not np.any(p.vec.coords)]:
            source.skip(index.root / speaker_id, "speaker profile is all zeros")
            del speakers[speaker_id]
            for key in [k for k in contexts if k[0] == speaker_id]:
                del contexts[key]
        if len(speakers) < 2:
            raise DataError(
                f"Training needs at least 2 speakers with usable audio, got {len(speakers)}"
            )
        reserved_contexts = {k: v for k, v in reserved_contexts.items() if k[0] in speakers}
        model = build_model(config, speakers, contexts, reserved_contexts)

    report = TrainReport(
        phases=dict(timer.phases),
        audio_seconds=audio_seconds,
        n_utterances=len(partials) + len(reserved_partials),
        p_target=config.p_target,
        active_parameters=model.encoding_active_parameters,
        skipped=tuple((str(path), reason) for path, reason in source.skipped[skipped_before:]),
    )
    logger.info(
        "trained %d speakers on %.1f s of audio (%.1fx real time)",
        model.n_speakers,
        report.audio_seconds,
        report.realtime_factor,
    )
    return model, report


@dataclass(frozen=True, eq=False)
class QueryItem:
    """One classification query: a reserved context, or one of its utterances."""

    speaker_id: str
    item_id: str
    vector: NDArray[np.float64]
    audio_seconds: float
    encode_seconds: float


def encode_queries(
    model: Model,
    index: DatasetIndex,
    source: AudioSource | None = None,
    per_utterance: bool = False,
) -> list[QueryItem]:
    """Encode every reserved test context of the speakers the model knows.

    Per context (default) the query is the sum of all the context's N-grams; with
    per_utterance each utterance is its own query. Zero vectors are dropped with a
    warning since they cannot be ranked.

    Raises:
        DataError: If no speaker of the model has usable test audio in the index
    """
    source = source or AudioSource()
    encoder = model.encoder()
    known = set(model.speakers)
    for speaker in sorted(set(index.speakers) - known):
        logger.warning("speaker %s is not in the model; not evaluated", speaker)
    entries = [entry for speaker, entry in index.speakers.items() if speaker in known]
    if not entries:
        raise DataError(f"No test contexts under {index.root} for the model's speakers")

    jobs = [(entry, path) for entry in entries for path in entry.test_utterances()]
    outcomes = source.map(lambda job: _encode_file(encoder, source, job[1]), jobs, "testing")

    items: list[QueryItem] = []
    grouped = itertools.groupby(zip(jobs, outcomes, strict=True), key=lambda pair: pair[0][0])
    for entry, group in grouped:
        usable = []
        for (_, path), outcome in group:
            if outcome.value is None:
                source.skip(path, outcome.error or "unusable")
            else:
                usable.append(outcome)
        if per_utterance:
            queries = [
                QueryItem(entry.speaker_id, o.path.name, o.value.coords, o.seconds, o.elapsed)
                for o in usable
                if o.value is not None
            ]
        elif usable:
            total = AccumVector.zeros(model.dim)
            for outcome in usable:
                if outcome.value is not None:
                    total = total + outcome.value
            queries = [
                QueryItem(
                    entry.speaker_id,
                    entry.test_context,
                    total.coords,
                    sum(o.seconds for o in usable),
                    sum(o.elapsed for o in usable),
                )
            ]
        else:
            queries = []
        for query in queries:
            if not np.any(query.vector):
                logger.warning(
                    "%s/%s encodes to zero; not classified", query.speaker_id, query.item_id
                )
                continue
            items.append(query)

    if not items:
        raise DataError(f"No classifiable test audio under {index.root}")
    return items


def _query_matrix(items: Sequence[QueryItem]) -> tuple[NDArray[np.float64], list[str]]:
    return np.vstack([item.vector for item in items]), [item.speaker_id for item in items]


def evaluate_queries(
    model: Model,
    items: Sequence[QueryItem],
    train_seconds: float | None = None,
    active_parameters: int | None = None,
) -> EvalReport:
    """Classify encoded queries against the model's prototypes.

    Latency is encode plus classify wall time over audio seconds, in ms per second.
    """
    matrix, labels = _query_matrix(items)

    start = time.perf_counter()
    rankings = classify_many(matrix, model.prototype_set())
    classify_seconds = time.perf_counter() - start

    audio_seconds = sum(item.audio_seconds for item in items)
    busy = sum(item.encode_seconds for item in items) + classify_seconds
    latency = 1000.0 * busy / audio_seconds if audio_seconds > 0 else None
    return build_report(
        rankings,
        labels,
        model.n_speakers,
        active_parameters if active_parameters is not None else model.encoding_active_parameters,
        train_seconds,
        latency,
    )


def evaluate_model(
    model: Model,
    index: DatasetIndex,
    source: AudioSource | None = None,
    per_utterance: bool = False,
    train_seconds: float | None = None,
    active_parameters: int | None = None,
) -> EvalReport:
    """encode_queries followed by evaluate_queries."""
    items = encode_queries(model, index, source, per_utterance)
    return evaluate_queries(model, items, train_seconds, active_parameters)


def accuracy_hook(items: Sequence[QueryItem]) -> Callable[[PrototypeSet], TopK]:
    """GLVQ eval hook scoring prototypes against precomputed queries."""
    matrix, labels = _query_matrix(items)

    def hook(protos: PrototypeSet) -> TopK:
        rankings = classify_many(matrix, protos)
        top1, top5, top10 = (topk_accuracy(rankings, labels, k) for k in TOP_KS)
        return top1, top5, top10

    return hook


def refine_model(
    model: Model,
    cfg: GlvqConfig,
    queries: Sequence[QueryItem] | None = None,
    progress: bool = False,
) -> tuple[Model, list[EpochStats], float]:
    """GLVQ over the model's training-context profiles, starting from its prototypes.

    Returns:
        (refined model, per-epoch stats, training seconds)

    Raises:
        DataError: If the model holds no training-context profiles
    """
    vectors, labels = model.context_matrix()
    if len(vectors) == 0:
        raise DataError("Model has no training-context profiles to refine with")
    hook = accuracy_hook(queries) if queries else None

    start = time.perf_counter()
    protos, history = glvq_train(model.prototype_set(), vectors, labels, cfg, hook, progress)
    elapsed = time.perf_counter() - start
    logger.info("GLVQ %d epochs took %.3f s", cfg.epochs, elapsed)
    return model.with_prototypes(protos), history, elapsed


@dataclass(frozen=True)
class SweepRow:
    ngram_order: int
    weighting: WeightingMode
    n_bins: int
    refined: bool
    report: EvalReport

    CSV_FIELDS = ("ngram_order", "weighting", "n_bins", "glvq", "top1", "top5", "top10", "mi_bits")

    def csv_row(self) -> list[str]:
        return [
            str(self.ngram_order),
            self.weighting.value,
            str(self.n_bins),
            "yes" if self.refined else "no",
            f"{self.report.top1:.6f}",
            f"{self.report.top5:.6f}",
            f"{self.report.top10:.6f}",
            f"{self.report.mutual_info_bits:.4f}",
        ]


def sweep(
    index: DatasetIndex,
    base: EncoderConfig,
    orders: Iterable[int],
    modes: Iterable[WeightingMode],
    bin_counts: Iterable[int],
    glvq_cfg: GlvqConfig | None = None,
    source: AudioSource | None = None,
) -> list[SweepRow]:
    """Train and evaluate every (order, weighting, bins) combination in memory.

    With glvq_cfg each combination also gets a refined row.
    """
    source = source or AudioSource(cache=True)
    rows = []
    for order, mode, n_bins in itertools.product(list(orders), list(modes), list(bin_counts)):
        mode = WeightingMode(mode)
        config = EncoderConfig(
            dim=base.dim,
            ngram_order=order,
            alpha=base.alpha,
            weighting=mode,
            p_target=base.p_target,
            n_bins=n_bins,
            seed_memory_seed=base.seed_memory_seed,
            permutation_seed=base.permutation_seed,
        )
        logger.info("sweep: N=%d weighting=%s bins=%d", order, mode.value, n_bins)
        model, report = train_model(index, config, source)
        items = encode_queries(model, index, source)
        rows.append(
            SweepRow(order, mode, n_bins, False, evaluate_queries(model, items, report.train_seconds))
        )
        if glvq_cfg is not None:
            refined, _, seconds = refine_model(model, glvq_cfg, items)
            rows.append(
                SweepRow(
                    order,
                    mode,
                    n_bins,
                    True,
                    evaluate_queries(
                        refined,
                        items,
                        report.train_seconds + seconds,
                        refined.glvq_active_parameters,
                    ),
                )
            )
    return rows

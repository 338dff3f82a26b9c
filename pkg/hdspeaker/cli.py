"""
Command implementations behind `hdspeaker <command>`.

Each cmd_* function takes plain values, prints its result to stdout and returns
it, so the commands can be driven from tests without argparse. Exceptions
propagate; `__main__` maps them to exit codes.
"""

from __future__ import annotations

import csv
import io
import logging
import statistics
import time
from collections.abc import Sequence
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._files import atomic_write_text
from .dataset import MIN_TEST_UTTERANCES, index_dataset
from .dsp import analyze_utterance, load_wav
from .encoder import (
    Encoder,
    EncoderConfig,
    UtterancePartial,
    WeightingMode,
    accumulate_profiles,
)
from .evaluation import EvalReport, Ranking, classify
from .exceptions import SilentUtteranceError, UnclassifiableError
from .glvq import EpochStats, GlvqConfig, PrototypeSet
from .inspect import (
    DEFAULT_CORRELATION_SPEAKERS,
    _format_result,
    correlation_report,
    describe,
    power_table,
    run_checks,
)
from .model import load_model, save_model
from .pipeline import (
    AudioSource,
    PhaseTimer,
    SweepRow,
    TrainReport,
    encode_queries,
    evaluate_model,
    refine_model,
    sidecar_path,
    sweep,
    train_model,
)
from .synth import SynthConfig, make_speakers, synthesize_utterance, write_corpus
from .vsa import make_rng

DEFAULT_TOP = 10
EXIT_OK = 0
EXIT_CHECKS_FAILED = 2

logger = logging.getLogger(__name__)


def _read_sidecar(model_path: Path) -> TrainReport | None:
    path = sidecar_path(model_path)
    if not path.is_file():
        return None
    return TrainReport.from_json(path.read_text(encoding="utf-8"))


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def cmd_train(
    root: str | Path,
    out: str | Path,
    config: EncoderConfig,
    *,
    workers: int = 1,
    strict: bool = False,
    progress: bool = False,
    min_test_utterances: int = MIN_TEST_UTTERANCES,
    max_speakers: int | None = None,
) -> TrainReport:
    """Index, analyze, encode, accumulate and save; the report goes to <out>.train.json."""
    out = Path(out)
    timer = PhaseTimer()
    with timer.phase("index"):
        index = index_dataset(root, min_test_utterances, max_speakers)
    source = AudioSource(workers=workers, strict=strict, progress=progress)
    model, report = train_model(index, config, source, timer)
    with timer.phase("save"):
        save_model(model, out)
    report = replace(report, phases=dict(timer.phases))
    atomic_write_text(sidecar_path(out), report.to_json())

    print(report.summary())
    print(
        f"saved {out}: {model.n_speakers} speakers, "
        f"{len(model.training_contexts)} training contexts"
    )
    return report


def cmd_refine(
    model_path: str | Path,
    out: str | Path,
    cfg: GlvqConfig,
    *,
    eval_root: str | Path | None = None,
    epochs_csv: str | Path | None = None,
    workers: int = 1,
    strict: bool = False,
    progress: bool = False,
    min_test_utterances: int = MIN_TEST_UTTERANCES,
) -> list[EpochStats]:
    """Run GLVQ on a model's context profiles and save the refined prototypes.

    With eval_root, each epoch is also scored on that dataset's reserved contexts.
    Epoch stats go to epochs_csv, or stdout.
    """
    model_path, out = Path(model_path), Path(out)
    model = load_model(model_path)
    queries = None
    if eval_root is not None:
        index = index_dataset(eval_root, min_test_utterances)
        source = AudioSource(workers=workers, strict=strict, progress=progress)
        queries = encode_queries(model, index, source)

    refined, history, seconds = refine_model(model, cfg, queries, progress)
    save_model(refined, out)

    previous = _read_sidecar(model_path)
    phases = dict(previous.phases) if previous else {}
    phases["glvq"] = phases.get("glvq", 0.0) + seconds
    report = TrainReport(
        phases=phases,
        audio_seconds=previous.audio_seconds if previous else 0.0,
        n_utterances=previous.n_utterances if previous else 0,
        p_target=model.config.p_target,
        active_parameters=refined.glvq_active_parameters,
        skipped=previous.skipped if previous else (),
    )
    atomic_write_text(sidecar_path(out), report.to_json())

    text = _csv_text(EpochStats.CSV_FIELDS, [stats.csv_row() for stats in history])
    if epochs_csv is None:
        print(text, end="")
    else:
        atomic_write_text(epochs_csv, text)
    first, last = history[0], history[-1]
    print(
        f"GLVQ {cfg.epochs} epochs in {seconds:.2f} s: train misclassified "
        f"{first.train_misclassified} -> {last.train_misclassified}; saved {out}"
    )
    return history


def cmd_eval(
    model_path: str | Path,
    root: str | Path,
    *,
    per_utterance: bool = False,
    train_seconds: float | None = None,
    csv_path: str | Path | None = None,
    as_json: bool = False,
    workers: int = 1,
    strict: bool = False,
    progress: bool = False,
    min_test_utterances: int = MIN_TEST_UTTERANCES,
) -> EvalReport:
    """Classify every reserved context and report Top-1/5/10, information and cost.

    Training time for the efficiency figure comes from train_seconds, else from the
    model's training report if one sits beside it. The report also decides the
    active-parameter count, which doubles once GLVQ has run.
    """
    model_path = Path(model_path)
    model = load_model(model_path)
    sidecar = _read_sidecar(model_path)
    active = None
    if sidecar is not None:
        refined = "glvq" in sidecar.phases
        active = model.glvq_active_parameters if refined else sidecar.active_parameters
        if train_seconds is None:
            train_seconds = sidecar.train_seconds
    if train_seconds is None:
        logger.info("no training time for %s; efficiency is not reported", model_path)

    index = index_dataset(root, min_test_utterances)
    source = AudioSource(workers=workers, strict=strict, progress=progress)
    report = evaluate_model(model, index, source, per_utterance, train_seconds, active)

    print(report.json_line() if as_json else report.table())
    if csv_path is not None:
        atomic_write_text(csv_path, report.csv_text())
    return report


def cmd_classify(
    model_path: str | Path, wav_path: str | Path, top: int = DEFAULT_TOP
) -> tuple[Ranking, float]:
    """Rank the model's speakers for one WAV file.

    Returns:
        (ranking, encode+classify seconds)

    Raises:
        UnclassifiableError: If the utterance encodes to the zero vector
    """
    model = load_model(model_path)
    encoder = model.encoder()
    protos = model.prototype_set()

    clip = load_wav(wav_path)
    start = time.perf_counter()
    try:
        vec = encoder.profile(analyze_utterance(clip))
    except SilentUtteranceError as e:
        raise UnclassifiableError(f"{wav_path} is silent and cannot be classified") from e
    if not np.any(vec.coords):
        raise UnclassifiableError(f"{wav_path} encodes to the zero vector and cannot be classified")
    ranking = classify(vec.coords, protos)
    elapsed = time.perf_counter() - start

    for rank, (speaker, score) in enumerate(ranking.entries[:top], start=1):
        print(f"{rank:>3}  {speaker:<24} {score:+.6f}")
    print(f"{elapsed * 1000:.2f} ms for {clip.duration:.2f} s of audio")
    return ranking, elapsed


def cmd_inspect(
    model_path: str | Path | None = None,
    *,
    correlation_csv: str | Path | None = None,
    first: int = DEFAULT_CORRELATION_SPEAKERS,
    speaker_dir: str | Path | None = None,
    power_csv: str | Path | None = None,
) -> int:
    """Describe and check a model; optionally dump correlation or power tables.

    Returns:
        0 when every check passes, 2 otherwise
    """
    status = EXIT_OK
    if model_path is not None:
        model = load_model(model_path)
        print(describe(model))
        results = run_checks(model)
        for result in results:
            print(_format_result(result))
        if not all(result.ok for result in results):
            status = EXIT_CHECKS_FAILED
        if correlation_csv is not None:
            text, mean = correlation_report(model, first)
            atomic_write_text(correlation_csv, text)
            print(f"mean off-diagonal profile cosine {mean:.4f} -> {correlation_csv}")

    if speaker_dir is not None:
        table = power_table(speaker_dir)
        if power_csv is None:
            print(table, end="")
        else:
            atomic_write_text(power_csv, table)
            print(f"average bin power per utterance -> {power_csv}")
    return status


@dataclass(frozen=True)
class BenchResult:
    classify_ms: float
    audio_seconds: float
    n_prototypes: int
    dim: int
    realtime_factor: float


def measure_classify_latency(
    n_prototypes: int, dim: int, repeats: int, seed: int = 0
) -> tuple[float, float]:
    """Median encode+classify wall time (ms) for one second of synthetic speech.

    Returns:
        (median milliseconds, audio seconds per query)
    """
    cfg = SynthConfig(n_speakers=1, n_contexts=1, utterances_per_context=1, seconds=1.0, seed=seed)
    clip = synthesize_utterance(make_speakers(cfg)[0], cfg, 0, 0)
    spectra = analyze_utterance(clip)
    encoder = Encoder(
        EncoderConfig(dim=dim, weighting=WeightingMode.NORMALIZED, p_target=spectra.max_bin_power)
    )

    rng = make_rng(seed)
    prototypes = rng.standard_normal((n_prototypes, dim))
    prototypes /= np.linalg.norm(prototypes, axis=1, keepdims=True)
    protos = PrototypeSet(prototypes, tuple(f"s{i:05d}" for i in range(n_prototypes)))

    timings = []
    for _ in range(repeats):
        start = time.perf_counter()
        vec = encoder.profile(analyze_utterance(clip))
        classify(vec.coords, protos)
        timings.append(time.perf_counter() - start)
    return 1000.0 * statistics.median(timings), clip.duration


def measure_training_throughput(audio_seconds: float, dim: int, seed: int = 0) -> float:
    """Audio seconds analyzed, encoded and accumulated per second of wall time."""
    utterances = max(1, round(audio_seconds / 3.0))
    cfg = SynthConfig(
        n_speakers=2, n_contexts=1, utterances_per_context=utterances, seconds=3.0, seed=seed
    )
    clips = [
        (speaker.speaker_id, synthesize_utterance(speaker, cfg, 0, u))
        for speaker in make_speakers(cfg)
        for u in range(utterances)
    ]
    encoder = Encoder(EncoderConfig(dim=dim, weighting=WeightingMode.ENERGY))

    start = time.perf_counter()
    partials = [
        UtterancePartial(speaker_id, "ctx01", f"{i:05d}", encoder.profile(analyze_utterance(clip)))
        for i, (speaker_id, clip) in enumerate(clips)
    ]
    accumulate_profiles(partials)
    elapsed = time.perf_counter() - start
    return sum(clip.duration for _, clip in clips) / elapsed


def cmd_bench(
    *,
    speakers: int = 1251,
    dim: int = 1024,
    repeats: int = 20,
    train_audio: float = 60.0,
    seed: int = 0,
) -> BenchResult:
    """Classification latency against random prototypes, and training throughput."""
    classify_ms, seconds = measure_classify_latency(speakers, dim, repeats, seed)
    factor = measure_training_throughput(train_audio, dim, seed)
    print(
        f"classify  {classify_ms:.2f} ms per {seconds:.0f} s of audio "
        f"({speakers} speakers, D={dim})"
    )
    print(f"training  {factor:.1f}x real time")
    return BenchResult(classify_ms, seconds, speakers, dim, factor)


def cmd_synth(root: str | Path, cfg: SynthConfig, progress: bool = False) -> list[Path]:
    written = write_corpus(root, cfg, progress)
    print(f"wrote {len(written)} utterances for {cfg.n_speakers} speakers under {root}")
    return written


def cmd_sweep(
    root: str | Path,
    base: EncoderConfig,
    *,
    orders: Sequence[int],
    modes: Sequence[WeightingMode],
    bin_counts: Sequence[int],
    glvq_cfg: GlvqConfig | None = None,
    csv_path: str | Path | None = None,
    workers: int = 1,
    strict: bool = False,
    progress: bool = False,
    min_test_utterances: int = MIN_TEST_UTTERANCES,
    max_speakers: int | None = None,
) -> list[SweepRow]:
    """Train and evaluate a grid of encoder settings; prints one row per setting."""
    index = index_dataset(root, min_test_utterances, max_speakers)
    source = AudioSource(workers=workers, strict=strict, progress=progress, cache=True)
    rows = sweep(index, base, orders, modes, bin_counts, glvq_cfg, source)

    print(" N weighting   bins glvq   top1   top5  top10  MI bits")
    for row in rows:
        r = row.report
        print(
            f"{row.ngram_order:>2} {row.weighting.value:<11} {row.n_bins:>4} "
            f"{'yes' if row.refined else 'no':<4} {r.top1:6.3f} {r.top5:6.3f} {r.top10:6.3f} "
            f"{r.mutual_info_bits:8.2f}"
        )
    if csv_path is not None:
        text = _csv_text(SweepRow.CSV_FIELDS, [row.csv_row() for row in rows])
        atomic_write_text(csv_path, text)
    return rows

"""Model diagnostics: header summary, parameter counts, health checks, spectra tables."""

from __future__ import annotations

import csv
import io
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import N_BINS, analyze_file
from .encoder import WeightingMode
from .evaluation import matrix_to_csv, mean_off_diagonal, profile_correlation_matrix
from .exceptions import DataError, HdSpeakerError, WavError
from .model import Model
from .vsa import SEED_TABLE_SIZE, is_bipolar, make_permutation, make_seed_memory

UNIT_NORM_TOLERANCE = 1e-4
DEFAULT_CORRELATION_SPEAKERS = 20
POWER_FLOOR = 1e-12

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    """One diagnostic check result."""

    name: str
    ok: bool
    detail: str


def _check_seed_memory(model: Model) -> CheckResult:
    try:
        mem = make_seed_memory(model.config.seed_memory_seed, model.dim)
    except HdSpeakerError as e:
        return CheckResult("seed memory", False, str(e))
    if len(mem) != SEED_TABLE_SIZE or not is_bipolar(mem.seeds):
        return CheckResult("seed memory", False, "regenerated table is not 78 bipolar vectors")
    return CheckResult(
        "seed memory", True, f"{len(mem)} seeds from seed {model.config.seed_memory_seed}"
    )


def _check_permutation(model: Model) -> CheckResult:
    try:
        perm = make_permutation(model.config.permutation_seed, model.dim)
    except HdSpeakerError as e:
        return CheckResult("permutation", False, str(e))
    if not np.array_equal(np.sort(perm.mapping), np.arange(model.dim)):
        return CheckResult("permutation", False, "regenerated mapping is not a permutation")
    return CheckResult("permutation", True, f"seed {model.config.permutation_seed}")


def _check_prototypes(model: Model) -> CheckResult:
    norms = np.linalg.norm(model.prototypes.astype(np.float64), axis=1)
    worst = float(np.max(np.abs(norms - 1.0))) if norms.size else 0.0
    if not np.all(np.isfinite(norms)) or worst > UNIT_NORM_TOLERANCE:
        return CheckResult("prototypes", False, f"norms deviate from 1 by up to {worst:.2e}")
    return CheckResult("prototypes", True, f"{model.n_speakers} unit vectors")


def _check_profiles(model: Model) -> CheckResult:
    if not np.all(np.isfinite(model.profiles)):
        return CheckResult("profiles", False, "non-finite coordinates")
    zero = [s for s, row in zip(model.speakers, model.profiles, strict=True) if not np.any(row)]
    if zero:
        return CheckResult("profiles", False, f"zero profile for {', '.join(zero[:5])}")
    return CheckResult("profiles", True, "finite and nonzero")


def _check_contexts(model: Model) -> CheckResult:
    training = model.training_contexts
    if not training:
        return CheckResult("contexts", False, "no training contexts; refine is unavailable")
    covered = {context.speaker_id for context in training}
    missing = [speaker for speaker in model.speakers if speaker not in covered]
    if missing:
        return CheckResult("contexts", False, f"no context profile for {', '.join(missing[:5])}")
    reserved = len(model.contexts) - len(training)
    return CheckResult("contexts", True, f"{len(training)} training, {reserved} reserved")


def _check_p_target(model: Model) -> CheckResult:
    cfg = model.config
    if cfg.weighting is WeightingMode.NORMALIZED and cfg.p_target is None:
        return CheckResult("p_target", False, "normalized weighting without p_target")
    detail = "unused" if cfg.p_target is None else f"{cfg.p_target:.6g}"
    return CheckResult("p_target", True, detail)


def run_checks(model: Model) -> list[CheckResult]:
    """Run model diagnostics without raising on expected failures."""
    return [
        _check_seed_memory(model),
        _check_permutation(model),
        _check_prototypes(model),
        _check_profiles(model),
        _check_contexts(model),
        _check_p_target(model),
    ]


def _format_result(result: CheckResult) -> str:
    marker = "ok" if result.ok else "fail"
    return f"[{marker}] {result.name}: {result.detail}"


def describe(model: Model) -> str:
    cfg = model.config
    p_target = "-" if cfg.p_target is None else f"{cfg.p_target:.6g}"
    lines = [
        f"dimension          {cfg.dim}",
        f"n-gram order       {cfg.ngram_order}",
        f"frequency bins     {cfg.n_bins}",
        f"weighting          {cfg.weighting.value} (alpha {cfg.alpha:g})",
        f"p_target           {p_target}",
        f"seeds              memory {cfg.seed_memory_seed}, permutation {cfg.permutation_seed}",
        f"speakers           {model.n_speakers}",
        f"contexts           {len(model.training_contexts)} training, "
        f"{len(model.contexts) - len(model.training_contexts)} reserved",
        f"stored parameters  {model.stored_parameters}",
        f"active parameters  {model.encoding_active_parameters} (encoding), "
        f"{model.glvq_active_parameters} (GLVQ)",
    ]
    return "\n".join(lines)


def correlation_report(
    model: Model, first: int = DEFAULT_CORRELATION_SPEAKERS
) -> tuple[str, float]:
    """Profile cosine matrix of the first `first` speakers, as CSV, and its mean off-diagonal."""
    count = min(first, model.n_speakers)
    matrix = profile_correlation_matrix(model.profiles[:count])
    return matrix_to_csv(matrix, model.speakers[:count]), mean_off_diagonal(matrix)


def power_table(speaker_dir: str | Path, paths: Sequence[Path] | None = None) -> str:
    """CSV of each utterance's mean bin power in dB under one speaker directory.

    Raises:
        DataError: If the directory holds no readable utterances
    """
    speaker_dir = Path(speaker_dir)
    if paths is None:
        paths = sorted(speaker_dir.glob("*/*.wav"))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["context", "utterance", *(f"bin{i}" for i in range(N_BINS))])
    rows = 0
    for path in paths:
        try:
            power = analyze_file(path).mean_bin_power
        except WavError as e:
            logger.warning("skipping %s: %s", path, e)
            continue
        db = 10.0 * np.log10(np.maximum(power, POWER_FLOOR))
        writer.writerow([path.parent.name, path.name, *(f"{value:.3f}" for value in db)])
        rows += 1
    if rows == 0:
        raise DataError(f"No readable utterances under {speaker_dir}")
    return buffer.getvalue()

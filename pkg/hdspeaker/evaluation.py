"""
Classification and metrics.

Test profiles are ranked against speaker prototypes by cosine. Reports carry
Top-1/5/10 accuracy, the mutual information those accuracies imply, and the
training cost per bit of that information.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import NDArray

from .exceptions import (
    DimensionMismatchError,
    InvalidInputError,
    UnclassifiableError,
    UndefinedSimilarityError,
)
from .glvq import PrototypeSet

TOP_KS = (1, 5, 10)
CONFUSIONS_REPORTED = 5


@dataclass(frozen=True)
class Ranking:
    """Speakers by descending cosine score; equal scores in ascending speaker id."""

    entries: tuple[tuple[str, float], ...]

    @property
    def best(self) -> str:
        return self.entries[0][0]

    def top(self, k: int) -> tuple[str, ...]:
        return tuple(label for label, _ in self.entries[:k])

    def contains(self, label: str, k: int) -> bool:
        return label in self.top(k)


def _label_ranks(labels: Sequence[str]) -> NDArray[np.intp]:
    ranks = np.empty(len(labels), dtype=np.intp)
    ranks[np.argsort(np.array(labels, dtype=object), kind="stable")] = np.arange(len(labels))
    return ranks


def _rank_rows(scores: NDArray[np.float64], protos: PrototypeSet) -> list[Ranking]:
    ranks = _label_ranks(protos.labels)
    rankings = []
    for row in scores:
        order = np.lexsort((ranks, -row))
        rankings.append(Ranking(tuple((protos.labels[i], float(row[i])) for i in order)))
    return rankings


def _cosine_scores(vectors: NDArray[np.float64], protos: PrototypeSet) -> NDArray[np.float64]:
    proto_norms = np.linalg.norm(protos.prototypes, axis=1)
    if np.any(proto_norms == 0):
        raise UndefinedSimilarityError("A prototype has zero norm")
    vector_norms = np.linalg.norm(vectors, axis=1)
    zero = np.flatnonzero(vector_norms == 0)
    if zero.size:
        raise UnclassifiableError(f"Test vector {int(zero[0])} is all zeros")
    scores = (vectors @ protos.prototypes.T) / np.outer(vector_norms, proto_norms)
    return np.clip(scores, -1.0, 1.0)


def classify(test_vec: NDArray[np.floating], protos: PrototypeSet) -> Ranking:
    """Rank every speaker against one test profile.

    Raises:
        UnclassifiableError: If the test vector is all zeros
        DimensionMismatchError: If the vector length differs from the prototypes'
    """
    vector = np.asarray(test_vec, dtype=np.float64)
    if vector.shape != (protos.dim,):
        raise DimensionMismatchError(
            f"Test vector must have dimension {protos.dim}, got shape {vector.shape}"
        )
    return _rank_rows(_cosine_scores(vector[np.newaxis, :], protos), protos)[0]


def classify_many(vectors: NDArray[np.floating], protos: PrototypeSet) -> list[Ranking]:
    """classify for each row of a (M, D) matrix, scored with one matrix product."""
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != protos.dim:
        raise DimensionMismatchError(
            f"Test matrix must be (M, {protos.dim}), got shape {matrix.shape}"
        )
    return _rank_rows(_cosine_scores(matrix, protos), protos)


def topk_accuracy(rankings: Sequence[Ranking], labels: Sequence[str], k: int) -> float:
    """Fraction of items whose true speaker is among the k best.

    Raises:
        InvalidInputError: If k < 1, the test set is empty, or lengths differ
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if not rankings:
        raise InvalidInputError("Cannot compute accuracy over an empty test set")
    if len(rankings) != len(labels):
        raise InvalidInputError(f"{len(rankings)} rankings for {len(labels)} labels")
    hits = sum(ranking.contains(label, k) for ranking, label in zip(rankings, labels, strict=True))
    return hits / len(rankings)


def mutual_information(p: float, n_speakers: int) -> float:
    """Bits of speaker identity delivered by a classifier with Top-1 accuracy p.

    Assumes uniform speakers and errors spread evenly over the other n-1:
    I = log2(n) - [p log2(1/p) + (1-p) log2((n-1)/(1-p))]. Endpoints use their limits.

    Raises:
        InvalidInputError: If p is outside [0, 1] or n_speakers < 2
    """
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise InvalidInputError(f"Top-1 accuracy must be within [0, 1], got {p}")
    if n_speakers < 2:
        raise InvalidInputError(f"Need at least 2 speakers, got {n_speakers}")

    conditional = 0.0
    if p > 0.0:
        conditional += p * math.log2(1.0 / p)
    if p < 1.0:
        conditional += (1.0 - p) * math.log2((n_speakers - 1) / (1.0 - p))
    return math.log2(n_speakers) - conditional


def training_efficiency(active_params: int, train_time: float, info_bits: float) -> float:
    """Training energy per bit of information: active parameters x seconds / bits.

    Raises:
        InvalidInputError: If the information gain is not positive
    """
    if not (info_bits > 0 and math.isfinite(info_bits)):
        raise InvalidInputError(f"Information gain must be positive, got {info_bits}")
    return active_params * train_time / info_bits


def profile_correlation_matrix(profiles: NDArray[np.floating]) -> NDArray[np.float64]:
    """Pairwise cosine matrix of M profile rows (M >= 2).

    Raises:
        UndefinedSimilarityError: If a profile has zero norm
    """
    matrix = np.asarray(profiles, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise InvalidInputError(f"Need at least 2 profile rows, got shape {matrix.shape}")
    norms = np.linalg.norm(matrix, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise UndefinedSimilarityError(f"Profile {int(zero[0])} has zero norm")
    unit = matrix / norms[:, np.newaxis]
    result = np.clip(unit @ unit.T, -1.0, 1.0)
    result = (result + result.T) / 2.0
    np.fill_diagonal(result, 1.0)
    return result


def mean_off_diagonal(matrix: NDArray[np.float64]) -> float:
    size = matrix.shape[0]
    mask = ~np.eye(size, dtype=bool)
    return float(matrix[mask].mean())


def matrix_to_csv(matrix: NDArray[np.float64], labels: Sequence[str]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["speaker", *labels])
    for label, row in zip(labels, matrix, strict=True):
        writer.writerow([label, *(f"{value:.6f}" for value in row)])
    return buffer.getvalue()


@dataclass(frozen=True)
class EvalReport:
    top1: float
    top5: float
    top10: float
    n_test: int
    n_speakers: int
    mutual_info_bits: float
    efficiency: float | None = None
    latency_ms_per_second: float | None = None
    confusions: tuple[tuple[str, str, int], ...] = field(default=())

    def table(self) -> str:
        """Human-readable summary."""
        lines = [
            f"test items        {self.n_test}",
            f"speakers          {self.n_speakers}",
            f"top-1             {self.top1:.3f}",
            f"top-5             {self.top5:.3f}",
            f"top-10            {self.top10:.3f}",
            f"mutual info       {self.mutual_info_bits:.2f} bits",
        ]
        if self.efficiency is not None:
            lines.append(f"efficiency        {self.efficiency:.3g} param*s/bit")
        if self.latency_ms_per_second is not None:
            lines.append(f"latency           {self.latency_ms_per_second:.3f} ms per audio second")
        for true, predicted, count in self.confusions:
            lines.append(f"confused          {true} -> {predicted} ({count})")
        return "\n".join(lines)

    def csv_text(self) -> str:
        columns = ("top1", "top5", "top10", "n_test", "n_speakers", "mutual_info_bits",
                   "efficiency", "latency_ms_per_second")
        values = asdict(self)
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        writer.writerow(["" if values[name] is None else values[name] for name in columns])
        return buffer.getvalue()

    def json_line(self) -> str:
        values = asdict(self)
        values["confusions"] = [list(item) for item in self.confusions]
        return json.dumps(values, sort_keys=True)


def build_report(
    rankings: Sequence[Ranking],
    labels: Sequence[str],
    n_speakers: int,
    active_params: int | None = None,
    train_seconds: float | None = None,
    latency_ms_per_second: float | None = None,
) -> EvalReport:
    """Assemble an EvalReport from rankings and true labels."""
    top1, top5, top10 = (topk_accuracy(rankings, labels, k) for k in TOP_KS)
    info = mutual_information(top1, n_speakers)
    efficiency = None
    if active_params is not None and train_seconds is not None and info > 0:
        efficiency = training_efficiency(active_params, train_seconds, info)

    errors = Counter(
        (label, ranking.best)
        for ranking, label in zip(rankings, labels, strict=True)
        if ranking.best != label
    )
    confusions = tuple(
        (true, predicted, count)
        for (true, predicted), count in sorted(errors.items(), key=lambda item: (-item[1], item[0]))
    )[:CONFUSIONS_REPORTED]

    return EvalReport(
        top1=top1,
        top5=top5,
        top10=top10,
        n_test=len(rankings),
        n_speakers=n_speakers,
        mutual_info_bits=info,
        efficiency=efficiency,
        latency_ms_per_second=latency_ms_per_second,
        confusions=confusions,
    )


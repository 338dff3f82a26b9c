"""
Generalized Learning Vector Quantization over speaker prototypes.

One unit-norm prototype per speaker, initialized from the speaker profiles and
refined with context profiles. Distances are squared Euclidean on unit vectors,
which ranks exactly like cosine. Each step moves the correct prototype toward the
sample and the nearest wrong prototype away from it, then renormalizes both.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from numpy.typing import NDArray
from tqdm import tqdm

from .encoder import SpeakerProfile
from .exceptions import ConfigError, InvalidInputError, UndefinedSimilarityError
from .vsa import _validate_seed, make_rng

DEFAULT_EPOCHS = 30
DEFAULT_LEARNING_RATE = 0.05

logger = logging.getLogger(__name__)

type TopK = tuple[float, float, float]
type EvalHook = Callable[[PrototypeSet], TopK]


class UpdateGate(StrEnum):
    """Which samples update the prototypes."""

    MISCLASSIFIED_ONLY = "misclassified_only"
    ALL = "all"


@dataclass(frozen=True)
class GlvqConfig:
    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = DEFAULT_LEARNING_RATE
    lr_decay: float = 1.0
    shuffle_seed: int = 0
    update_gate: UpdateGate = UpdateGate.MISCLASSIFIED_ONLY

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "update_gate", UpdateGate(self.update_gate))
        except ValueError as e:
            gates = ", ".join(gate.value for gate in UpdateGate)
            raise ConfigError(f"update_gate must be one of {gates}, got {self.update_gate!r}") from e
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ConfigError(f"learning_rate must be a positive number, got {self.learning_rate}")
        if not (math.isfinite(self.lr_decay) and self.lr_decay > 0):
            raise ConfigError(f"lr_decay must be a positive number, got {self.lr_decay}")
        try:
            _validate_seed(self.shuffle_seed, "shuffle_seed")
        except InvalidInputError as e:
            raise ConfigError(str(e)) from e

    def learning_rate_at(self, epoch: int) -> float:
        """Rate used during epoch `epoch` (1-based)."""
        return self.learning_rate * self.lr_decay ** (epoch - 1)


@dataclass(eq=False)
class PrototypeSet:
    """One unit-norm prototype row per speaker label."""

    prototypes: NDArray[np.float64]
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.prototypes.shape[0] != len(self.labels):
            raise InvalidInputError(
                f"{self.prototypes.shape[0]} prototypes for {len(self.labels)} labels"
            )
        self._index = {label: i for i, label in enumerate(self.labels)}

    @property
    def dim(self) -> int:
        return int(self.prototypes.shape[1])

    def __len__(self) -> int:
        return len(self.labels)

    def index_of(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError as e:
            raise InvalidInputError(f"Unknown speaker: {label}") from e

    def copy(self) -> PrototypeSet:
        return PrototypeSet(self.prototypes.copy(), self.labels)


@dataclass(frozen=True)
class EpochStats:
    """Accuracy after an epoch; epoch 0 is the untouched centroid classifier."""

    epoch: int
    train_misclassified: int
    train_top1: float
    test_top1: float | None = None
    test_top5: float | None = None
    test_top10: float | None = None

    CSV_FIELDS = ("epoch", "train_misclassified", "top1", "top5", "top10")

    def csv_row(self) -> list[str]:
        def fmt(value: float | None) -> str:
            return "" if value is None else f"{value:.6f}"

        return [
            str(self.epoch),
            str(self.train_misclassified),
            fmt(self.test_top1),
            fmt(self.test_top5),
            fmt(self.test_top10),
        ]


def _unit_rows(matrix: NDArray[np.float64]) -> NDArray[np.float64]:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return np.divide(matrix, norms, out=np.zeros_like(matrix), where=norms > 0)


def init_prototypes(
    speaker_profiles: Mapping[str, SpeakerProfile] | Sequence[SpeakerProfile],
) -> PrototypeSet:
    """Unit-normalized V_s for each speaker, in sorted speaker order.

    Raises:
        InvalidInputError: If fewer than two speakers are given
        UndefinedSimilarityError: If a profile is the zero vector (the speaker is named)
    """
    profiles = (
        list(speaker_profiles.values())
        if isinstance(speaker_profiles, Mapping)
        else list(speaker_profiles)
    )
    profiles.sort(key=lambda profile: profile.speaker_id)
    if len(profiles) < 2:
        raise InvalidInputError(f"GLVQ needs at least 2 speakers, got {len(profiles)}")

    rows = []
    for profile in profiles:
        norm = float(np.linalg.norm(profile.vec.coords))
        if norm == 0.0 or not math.isfinite(norm):
            raise UndefinedSimilarityError(
                f"Speaker {profile.speaker_id} has a zero-norm profile and cannot seed a prototype"
            )
        rows.append(profile.vec.coords / norm)
    return PrototypeSet(np.vstack(rows), tuple(profile.speaker_id for profile in profiles))


def _sigmoid(value: float) -> float:
    return 1.0 / (1.0 + math.exp(-value))


def squared_distances(x: NDArray[np.float64], prototypes: NDArray[np.float64]) -> NDArray[np.float64]:
    diff = prototypes - x
    return np.einsum("ij,ij->i", diff, diff)


def _nearest_rival(distances: NDArray[np.float64], correct: int) -> int:
    masked = distances.copy()
    masked[correct] = np.inf
    return int(np.argmin(masked))


def _is_misclassified(distances: NDArray[np.float64], correct: int) -> tuple[bool, int]:
    """Whether some other prototype is at least as close as the correct one, and which."""
    rival = _nearest_rival(distances, correct)
    return bool(distances[correct] >= distances[rival]), rival


def relative_distance(
    x: NDArray[np.float64], w_correct: NDArray[np.float64], w_rival: NDArray[np.float64]
) -> float:
    """μ = (d_J - d_K) / (d_J + d_K); negative when the sample is classified correctly."""
    d_j = float(np.sum((x - w_correct) ** 2))
    d_k = float(np.sum((x - w_rival) ** 2))
    total = d_j + d_k
    return 0.0 if total == 0.0 else (d_j - d_k) / total


def glvq_gradients(
    x: NDArray[np.float64], w_correct: NDArray[np.float64], w_rival: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Gradients of σ(μ) with respect to w_J and w_K."""
    d_j = float(np.sum((x - w_correct) ** 2))
    d_k = float(np.sum((x - w_rival) ** 2))
    total = d_j + d_k
    if total == 0.0:
        return np.zeros_like(w_correct), np.zeros_like(w_rival)
    sig = _sigmoid((d_j - d_k) / total)
    g = sig * (1.0 - sig)
    grad_correct = -g * (4.0 * d_k / total**2) * (x - w_correct)
    grad_rival = g * (4.0 * d_j / total**2) * (x - w_rival)
    return grad_correct, grad_rival


def _step_inplace(
    protos: PrototypeSet,
    x: NDArray[np.float64],
    correct: int,
    lr: float,
    gate: UpdateGate,
) -> bool:
    """One GLVQ update on `protos.prototypes`; returns whether the sample was misclassified."""
    distances = squared_distances(x, protos.prototypes)
    misclassified, rival = _is_misclassified(distances, correct)
    if lr == 0.0 or (gate is UpdateGate.MISCLASSIFIED_ONLY and not misclassified):
        return misclassified

    w_j = protos.prototypes[correct]
    w_k = protos.prototypes[rival]
    grad_j, grad_k = glvq_gradients(x, w_j, w_k)
    new_j = w_j - lr * grad_j
    new_k = w_k - lr * grad_k
    for row, vector in ((correct, new_j), (rival, new_k)):
        norm = float(np.linalg.norm(vector))
        if norm > 0.0:
            protos.prototypes[row] = vector / norm
    return misclassified


def glvq_step(
    protos: PrototypeSet,
    x: NDArray[np.float64],
    label: str,
    lr: float,
    gate: UpdateGate = UpdateGate.MISCLASSIFIED_ONLY,
) -> PrototypeSet:
    """Return a copy of `protos` after one update with sample x of speaker `label`.

    Only the correct prototype and the nearest prototype of another speaker change.
    """
    if len(protos) < 2:
        raise InvalidInputError("GLVQ needs at least 2 prototypes")
    updated = protos.copy()
    _step_inplace(updated, np.asarray(x, dtype=np.float64), protos.index_of(label), lr, gate)
    return updated


def count_misclassified(
    protos: PrototypeSet, vectors: NDArray[np.float64], label_index: NDArray[np.intp]
) -> int:
    """Samples with a wrong prototype at least as close as the correct one.

    Uses the same rule as the update step, so an exact tie counts as a miss.
    """
    return sum(
        _is_misclassified(squared_distances(x, protos.prototypes), int(correct))[0]
        for x, correct in zip(vectors, label_index, strict=True)
    )


def train(
    protos: PrototypeSet,
    vectors: NDArray[np.float64],
    labels: Sequence[str],
    cfg: GlvqConfig,
    eval_hook: EvalHook | None = None,
    progress: bool = False,
) -> tuple[PrototypeSet, list[EpochStats]]:
    """Refine prototypes over `cfg.epochs` passes of the context vectors.

    Each epoch shuffles the samples with a generator seeded by (shuffle_seed, epoch),
    steps through them in that order, then records EpochStats (calling eval_hook,
    if given, for test accuracies). Zero vectors are dropped before training.

    Returns:
        (refined prototypes, stats for epochs 0..cfg.epochs)
    """
    if len(vectors) != len(labels):
        raise InvalidInputError(f"{len(vectors)} vectors for {len(labels)} labels")

    protos = protos.copy()
    unit = _unit_rows(np.asarray(vectors, dtype=np.float64))
    keep = np.linalg.norm(unit, axis=1) > 0
    if not np.all(keep):
        logger.warning("dropping %d zero context vectors from GLVQ", int(np.count_nonzero(~keep)))
    unit = unit[keep]
    label_index = np.array(
        [protos.index_of(label) for label, kept in zip(labels, keep, strict=True) if kept],
        dtype=np.intp,
    )

    def stats_for(epoch: int) -> EpochStats:
        missed = count_misclassified(protos, unit, label_index)
        top1 = 1.0 - missed / len(unit) if len(unit) else 0.0
        tests: TopK | tuple[None, None, None] = (
            eval_hook(protos) if eval_hook is not None else (None, None, None)
        )
        return EpochStats(epoch, missed, top1, *tests)

    history = [stats_for(0)]
    epochs = range(1, cfg.epochs + 1)
    for epoch in tqdm(epochs, desc="GLVQ epochs", disable=not progress):
        lr = cfg.learning_rate_at(epoch)
        order = make_rng((cfg.shuffle_seed, epoch)).permutation(len(unit))
        for sample in order:
            _step_inplace(protos, unit[sample], int(label_index[sample]), lr, cfg.update_gate)
        history.append(stats_for(epoch))
        logger.info(
            "epoch %d: lr=%.4g train_misclassified=%d",
            epoch,
            lr,
            history[-1].train_misclassified,
        )
    return protos, history

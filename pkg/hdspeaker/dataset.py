"""
Dataset tree indexing and the train/test split.

Layout: root/<speaker>/<context>/<utterance>.wav. Each speaker reserves for testing
the context with the fewest utterances among those holding at least five (ties go
to the lexicographically first context); the other contexts train. Everything is
sorted explicitly, so the index does not depend on filesystem enumeration order.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import DataError, EmptyDatasetError, InvalidInputError

MIN_TEST_UTTERANCES = 5
AUDIO_SUFFIX = ".wav"

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SpeakerEntry:
    speaker_id: str
    contexts: Mapping[str, tuple[Path, ...]]
    test_context: str

    @property
    def train_contexts(self) -> tuple[str, ...]:
        return tuple(context for context in self.contexts if context != self.test_context)

    def train_utterances(self) -> list[tuple[str, Path]]:
        return [
            (context, path) for context in self.train_contexts for path in self.contexts[context]
        ]

    def test_utterances(self) -> tuple[Path, ...]:
        return self.contexts[self.test_context]


@dataclass(frozen=True, eq=False)
class DatasetIndex:
    """Eligible speakers with their split, plus what was left out and why."""

    root: Path
    speakers: Mapping[str, SpeakerEntry]
    excluded: Mapping[str, str] = field(default_factory=dict)
    unreadable: tuple[Path, ...] = ()

    @property
    def speaker_ids(self) -> tuple[str, ...]:
        return tuple(self.speakers)

    def limit(self, max_speakers: int | None) -> DatasetIndex:
        """Keep only the first `max_speakers` speakers in registry order."""
        _validate_limit(max_speakers)
        if max_speakers is None or max_speakers >= len(self.speakers):
            return self
        kept = dict(list(self.speakers.items())[:max_speakers])
        return DatasetIndex(self.root, kept, self.excluded, self.unreadable)


def _validate_limit(max_speakers: int | None) -> None:
    if max_speakers is not None and max_speakers < 1:
        raise InvalidInputError(f"max_speakers must be >= 1, got {max_speakers}")


def select_test_context(
    sizes: Mapping[str, int], min_utterances: int = MIN_TEST_UTTERANCES
) -> str | None:
    """The context with the fewest utterances among those with at least `min_utterances`.

    Returns None when no context qualifies.
    """
    eligible = [(count, context) for context, count in sizes.items() if count >= min_utterances]
    if not eligible:
        return None
    return min(eligible)[1]


def _utterances(context_dir: Path, unreadable: list[Path]) -> tuple[Path, ...]:
    found = []
    for path in sorted(context_dir.iterdir()):
        if not path.is_file() or path.suffix.lower() != AUDIO_SUFFIX:
            continue
        if not os.access(path, os.R_OK):
            unreadable.append(path)
            continue
        found.append(path)
    return tuple(found)


def index_dataset(
    root: str | Path,
    min_test_utterances: int = MIN_TEST_UTTERANCES,
    max_speakers: int | None = None,
) -> DatasetIndex:
    """Index a dataset tree and apply the split rule.

    Speakers with fewer than two contexts, or with no context of at least
    `min_test_utterances` utterances, are excluded with a warning. Unreadable files
    are listed, not fatal.

    Args:
        root: Dataset root directory
        min_test_utterances: Minimum size of a reservable test context
        max_speakers: Keep only the first N eligible speakers (sorted id order)

    Raises:
        DataError: If root is not a directory
        InvalidInputError: If max_speakers is below 1
        EmptyDatasetError: If no speaker is eligible
    """
    _validate_limit(max_speakers)
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"Dataset root is not a directory: {root}")

    speakers: dict[str, SpeakerEntry] = {}
    excluded: dict[str, str] = {}
    unreadable: list[Path] = []

    for speaker_dir in sorted(path for path in root.iterdir() if path.is_dir()):
        contexts = {
            context_dir.name: files
            for context_dir in sorted(path for path in speaker_dir.iterdir() if path.is_dir())
            if (files := _utterances(context_dir, unreadable))
        }
        speaker_id = speaker_dir.name
        if len(contexts) < 2:
            excluded[speaker_id] = f"needs at least 2 contexts, has {len(contexts)}"
        elif (
            test_context := select_test_context(
                {name: len(files) for name, files in contexts.items()}, min_test_utterances
            )
        ) is None:
            excluded[speaker_id] = f"no context with at least {min_test_utterances} utterances"
        else:
            speakers[speaker_id] = SpeakerEntry(speaker_id, contexts, test_context)
            continue
        logger.warning("excluding speaker %s: %s", speaker_id, excluded[speaker_id])

    for path in unreadable:
        logger.warning("unreadable audio file: %s", path)

    if not speakers:
        raise EmptyDatasetError(f"No eligible speakers under {root}")

    index = DatasetIndex(root, speakers, excluded, tuple(unreadable)).limit(max_speakers)
    logger.info(
        "indexed %d speakers (%d excluded) under %s",
        len(index.speakers),
        len(excluded),
        root,
    )
    return index

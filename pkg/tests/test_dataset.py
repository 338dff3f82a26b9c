"""Tests for dataset indexing and the train/test split."""

from pathlib import Path

import pytest

from hdspeaker.dataset import index_dataset, select_test_context
from hdspeaker.exceptions import DataError, EmptyDatasetError, InvalidInputError


def _make_tree(root: Path, layout: dict[str, dict[str, int]]) -> Path:
    """Create root/<speaker>/<context>/<n>.wav placeholders; contents are never read."""
    for speaker, contexts in layout.items():
        for context, count in contexts.items():
            directory = root / speaker / context
            directory.mkdir(parents=True)
            for i in range(count):
                (directory / f"{i + 1:05d}.wav").write_bytes(b"")
    return root


class TestSelectTestContext:
    """Tests for select_test_context()."""

    def test_fewest_with_at_least_five(self):
        """Sizes {7, 5, 9} reserve the 5-utterance context."""
        assert select_test_context({"a": 7, "b": 5, "c": 9}) == "b"

    def test_none_eligible(self):
        """Sizes {3, 4} leave nothing to reserve."""
        assert select_test_context({"a": 3, "b": 4}) is None

    def test_tie_goes_to_first_id(self):
        """Sizes {5, 5} reserve the lexicographically first context."""
        assert select_test_context({"z": 5, "m": 5}) == "m"

    def test_small_contexts_are_skipped(self):
        """A context below the minimum never wins, however small."""
        assert select_test_context({"a": 2, "b": 6}) == "b"


class TestIndexDataset:
    """Tests for index_dataset()."""

    def test_split(self, tmp_path):
        """Each eligible speaker gets its test context and keeps the rest for training."""
        _make_tree(
            tmp_path,
            {
                "id1": {"c1": 7, "c2": 5, "c3": 9},
                "id2": {"x": 5, "y": 5},
            },
        )
        index = index_dataset(tmp_path)
        assert index.speaker_ids == ("id1", "id2")
        assert index.speakers["id1"].test_context == "c2"
        assert index.speakers["id1"].train_contexts == ("c1", "c3")
        assert len(index.speakers["id1"].train_utterances()) == 16
        assert len(index.speakers["id1"].test_utterances()) == 5
        assert index.speakers["id2"].test_context == "x"

    def test_flags_speakers_without_test_context(self, tmp_path, caplog):
        """Sizes {3, 4} exclude the speaker with a warning."""
        _make_tree(tmp_path, {"ok": {"a": 5, "b": 1}, "small": {"a": 3, "b": 4}})
        index = index_dataset(tmp_path)
        assert index.speaker_ids == ("ok",)
        assert "small" in index.excluded
        assert "excluding speaker small" in caplog.text

    def test_excludes_single_context_speakers(self, tmp_path):
        """A speaker needs a context left for training."""
        _make_tree(tmp_path, {"ok": {"a": 5, "b": 5}, "solo": {"a": 8}})
        index = index_dataset(tmp_path)
        assert index.speaker_ids == ("ok",)
        assert "2 contexts" in index.excluded["solo"]

    def test_ignores_other_files_and_empty_contexts(self, tmp_path):
        """Only .wav files count; empty context folders do not count as contexts."""
        _make_tree(tmp_path, {"s": {"a": 5, "b": 2}})
        (tmp_path / "s" / "a" / "notes.txt").write_text("x")
        (tmp_path / "s" / "empty").mkdir()
        (tmp_path / "README").write_text("x")
        entry = index_dataset(tmp_path).speakers["s"]
        assert tuple(entry.contexts) == ("a", "b")
        assert len(entry.contexts["a"]) == 5

    def test_custom_minimum(self, tmp_path):
        """The minimum reservable size is configurable."""
        _make_tree(tmp_path, {"s": {"a": 3, "b": 4}})
        assert index_dataset(tmp_path, min_test_utterances=3).speakers["s"].test_context == "a"

    def test_max_speakers(self, tmp_path):
        """Only the first N eligible speakers are kept."""
        _make_tree(tmp_path, {f"id{i}": {"a": 5, "b": 5} for i in range(4)})
        assert index_dataset(tmp_path, max_speakers=2).speaker_ids == ("id0", "id1")

    @pytest.mark.parametrize("max_speakers", [0, -1])
    def test_max_speakers_below_one(self, tmp_path, max_speakers):
        """A limit below one is rejected instead of slicing from the end."""
        _make_tree(tmp_path, {f"id{i}": {"a": 5, "b": 5} for i in range(3)})
        with pytest.raises(InvalidInputError, match="max_speakers"):
            index_dataset(tmp_path, max_speakers=max_speakers)
        with pytest.raises(InvalidInputError):
            index_dataset(tmp_path).limit(max_speakers)

    def test_deterministic(self, tmp_path):
        """Indexing the same tree twice gives the same paths in the same order."""
        _make_tree(tmp_path, {"b": {"y": 5, "x": 6}, "a": {"q": 5, "p": 5}})
        first = index_dataset(tmp_path)
        second = index_dataset(tmp_path)
        for speaker in first.speaker_ids:
            assert first.speakers[speaker].contexts == second.speakers[speaker].contexts
        assert first.speaker_ids == ("a", "b")

    def test_empty_dataset(self, tmp_path):
        """No eligible speaker is an error."""
        _make_tree(tmp_path, {"small": {"a": 3, "b": 4}})
        with pytest.raises(EmptyDatasetError, match="No eligible speakers"):
            index_dataset(tmp_path)

    def test_missing_root(self, tmp_path):
        """The root must be a directory."""
        with pytest.raises(DataError, match="not a directory"):
            index_dataset(tmp_path / "nope")

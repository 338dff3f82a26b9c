"""Tests for training, evaluation and refinement over indexed datasets."""

import dataclasses
import shutil
import struct
from pathlib import Path

import numpy as np
import pytest

from hdspeaker.dataset import index_dataset
from hdspeaker.dsp import AudioClip, write_wav
from hdspeaker.encoder import EncoderConfig, WeightingMode
from hdspeaker.evaluation import mean_off_diagonal, profile_correlation_matrix
from hdspeaker.exceptions import DataError
from hdspeaker.glvq import GlvqConfig
from hdspeaker.model import model_to_bytes
from hdspeaker.pipeline import (
    AudioSource,
    PhaseTimer,
    TrainReport,
    encode_queries,
    evaluate_model,
    evaluate_queries,
    refine_model,
    sidecar_path,
    sweep,
    train_model,
)


class TestAudioSource:
    """Tests for AudioSource."""

    def test_map_keeps_order_with_workers(self):
        """Results come back in item order whatever the pool does."""
        source = AudioSource(workers=4)
        assert list(source.map(lambda x: x * x, list(range(50)), "squares")) == [
            x * x for x in range(50)
        ]

    def test_skip_records_once(self, tmp_path, caplog):
        """A file is skipped and logged once."""
        source = AudioSource()
        source.skip(tmp_path / "a.wav", "broken")
        source.skip(tmp_path / "a.wav", "broken")
        assert source.skipped == [(tmp_path / "a.wav", "broken")]
        assert caplog.text.count("skipping") == 1

    def test_strict_skip_raises(self, tmp_path):
        """Strict sources turn skips into errors."""
        with pytest.raises(DataError, match="broken"):
            AudioSource(strict=True).skip(tmp_path / "a.wav", "broken")

    def test_cache(self, tiny_corpus):
        """A caching source analyzes each file once."""
        path = next(tiny_corpus.glob("*/*/*.wav"))
        source = AudioSource(cache=True)
        assert source.analyze(path) is source.analyze(path)
        assert AudioSource().analyze(path) is not AudioSource().analyze(path)


class TestReports:
    """Tests for PhaseTimer, TrainReport and sidecar_path()."""

    def test_phase_timer_accumulates(self):
        """Repeated phases add up under one name, in first-run order."""
        timer = PhaseTimer()
        for name in ("index", "encode", "index"):
            with timer.phase(name):
                pass
        assert list(timer.phases) == ["index", "encode"]
        assert all(seconds >= 0 for seconds in timer.phases.values())

    def test_train_report_json(self):
        """The sidecar report survives a JSON round trip."""
        report = TrainReport(
            phases={"index": 0.5, "encode": 1.5},
            audio_seconds=60.0,
            n_utterances=20,
            p_target=0.125,
            active_parameters=1024,
            skipped=(("a.wav", "silent utterance"),),
        )
        assert report.train_seconds == 2.0
        assert report.realtime_factor == 30.0
        assert TrainReport.from_json(report.to_json()) == report
        assert "skipped      1 files" in report.summary()

    def test_train_report_rejects_garbage(self):
        """Invalid sidecars are data errors."""
        with pytest.raises(DataError, match="Invalid training report"):
            TrainReport.from_json('{"phases": 3}')

    def test_sidecar_path(self):
        """The report sits beside the model file."""
        assert sidecar_path("out/m.hdspk") == Path("out/m.hdspk.train.json")


@pytest.mark.integration
class TestTrainModel:
    """Tests for train_model() on small synthetic corpora."""

    def test_counts(self, tiny_model):
        """3 speakers x 2 contexts: 3 profiles and 6 context profiles, 3 of them training."""
        assert tiny_model.speakers == ("id10001", "id10002", "id10003")
        assert len(tiny_model.contexts) == 6
        assert len(tiny_model.training_contexts) == 3
        assert {c.context_id for c in tiny_model.contexts if c.reserved} == {"ctx01"}

    def test_p_target_is_computed(self, tiny_model):
        """Normalized weighting fixes p_target during training."""
        assert tiny_model.config.p_target is not None
        assert tiny_model.config.p_target > 0

    def test_report(self, tiny_corpus):
        """The report times each phase and counts the audio."""
        model, report = train_model(index_dataset(tiny_corpus), EncoderConfig())
        assert list(report.phases) == ["p_target", "encode", "accumulate"]
        assert report.n_utterances == 30
        assert report.audio_seconds == pytest.approx(60.0)
        assert report.p_target == model.config.p_target
        assert report.skipped == ()

    def test_retrain_is_byte_identical(self, tiny_corpus):
        """Same data and seeds give the same model file, with or without workers."""
        index = index_dataset(tiny_corpus)
        config = EncoderConfig(weighting=WeightingMode.ENERGY)
        first, _ = train_model(index, config)
        second, _ = train_model(index, config, AudioSource(workers=3))
        assert model_to_bytes(first) == model_to_bytes(second)

    def test_skips_unusable_files(self, tiny_corpus, tmp_path):
        """Broken, truncated and silent files are skipped; strict mode refuses them."""
        root = tmp_path / "corpus"
        shutil.copytree(tiny_corpus, root)
        (root / "id10001" / "ctx02" / "broken.wav").write_text("not audio")
        (root / "id10003" / "ctx02" / "header.wav").write_bytes(b"RIFF")
        (root / "id10003" / "ctx02" / "fmt.wav").write_bytes(
            b"RIFF" + struct.pack("<I", 28) + b"WAVE" + b"fmt " + struct.pack("<I", 16) + b"\x01\x00"
        )
        write_wav(root / "id10002" / "ctx02" / "silent.wav", AudioClip(np.zeros(16_000)))
        index = index_dataset(root)

        model, report = train_model(index, EncoderConfig())
        reasons = {Path(path).name: reason for path, reason in report.skipped}
        assert set(reasons) == {"broken.wav", "header.wav", "fmt.wav", "silent.wav"}
        assert "RIFF/WAVE" in reasons["header.wav"]
        assert "silent" in reasons["silent.wav"]
        assert model.n_speakers == 3

        with pytest.raises(DataError, match="broken.wav"):
            train_model(index, EncoderConfig(), AudioSource(strict=True))

    def test_needs_two_speakers(self, tiny_corpus, tmp_path):
        """A single usable speaker cannot be trained."""
        root = tmp_path / "corpus"
        shutil.copytree(tiny_corpus / "id10001", root / "id10001")
        with pytest.raises(DataError, match="at least 2 speakers"):
            train_model(index_dataset(root), EncoderConfig())


@pytest.mark.integration
class TestEvaluate:
    """Tests for encode_queries(), evaluate_model() and refine_model()."""

    def test_per_context_and_per_utterance(self, tiny_model, tiny_corpus):
        """One query per reserved context by default, one per utterance on request."""
        index = index_dataset(tiny_corpus)
        contexts = encode_queries(tiny_model, index)
        utterances = encode_queries(tiny_model, index, per_utterance=True)
        assert [q.item_id for q in contexts] == ["ctx01"] * 3
        assert len(utterances) == 15
        assert contexts[0].audio_seconds == pytest.approx(10.0)

    def test_report(self, tiny_model, tiny_corpus):
        """Accuracies are ordered and latency is measured."""
        report = evaluate_model(tiny_model, index_dataset(tiny_corpus), train_seconds=1.0)
        assert report.n_test == 3
        assert report.n_speakers == 3
        assert report.top1 <= report.top5 <= report.top10
        assert report.latency_ms_per_second is not None
        assert report.latency_ms_per_second > 0

    def test_unknown_speakers_are_ignored(self, tiny_model, synth_corpus):
        """Speakers the model does not know are not evaluated."""
        items = encode_queries(tiny_model, index_dataset(synth_corpus))
        assert {item.speaker_id for item in items} == set(tiny_model.speakers)

    def test_refine_without_contexts(self, tiny_model):
        """Refinement needs training-context profiles."""
        bare = dataclasses.replace(tiny_model, contexts=())
        with pytest.raises(DataError, match="training-context"):
            refine_model(bare, GlvqConfig())

    def test_refine_zero_epochs(self, tiny_model):
        """epochs=0 leaves the prototypes as they were."""
        refined, history, _ = refine_model(tiny_model, GlvqConfig(epochs=0))
        assert np.array_equal(refined.prototypes, tiny_model.prototypes)
        assert len(history) == 1

    def test_refine_scores_queries(self, tiny_model, tiny_corpus):
        """With queries every epoch carries test accuracies."""
        items = encode_queries(tiny_model, index_dataset(tiny_corpus))
        _, history, _ = refine_model(tiny_model, GlvqConfig(epochs=2), items)
        assert all(stats.test_top1 is not None for stats in history)
        assert evaluate_queries(tiny_model, items).top1 == history[0].test_top1

    def test_sweep(self, tiny_corpus):
        """One row per setting, plus a refined row each with GLVQ."""
        rows = sweep(
            index_dataset(tiny_corpus),
            EncoderConfig(dim=256),
            orders=[1, 3],
            modes=[WeightingMode.ENERGY],
            bin_counts=[40],
            glvq_cfg=GlvqConfig(epochs=2),
        )
        assert [(row.ngram_order, row.refined) for row in rows] == [
            (1, False),
            (1, True),
            (3, False),
            (3, True),
        ]
        assert rows[0].csv_row()[:4] == ["1", "energy", "40", "no"]


@pytest.mark.integration
class TestSyntheticSpeakers:
    """End-to-end identification of formant-filtered noise speakers."""

    @pytest.fixture(scope="class")
    def trained(self, synth_corpus):
        """Index and normalized-weighting model for the ten-speaker corpus."""
        index = index_dataset(synth_corpus)
        model, report = train_model(index, EncoderConfig())
        return index, model, report

    def test_centroid_accuracy(self, trained):
        """The one-shot centroid classifier identifies nearly every reserved context."""
        index, model, report = trained
        result = evaluate_model(model, index, train_seconds=report.train_seconds)
        assert result.n_test == 10
        assert result.top1 >= 0.9
        assert result.efficiency is not None

    def test_refinement_does_not_hurt_training_accuracy(self, trained):
        """30 GLVQ epochs end at least as accurate on the training contexts as they start."""
        _, model, _ = trained
        _, history, _ = refine_model(model, GlvqConfig())
        assert len(history) == 31
        assert history[-1].train_top1 >= history[0].train_top1

    def test_energy_weighting_decorrelates_padded_profiles(self, padded_corpus):
        """Silence padding makes unweighted profiles more alike than energy-weighted ones."""
        index = index_dataset(padded_corpus)
        source = AudioSource(cache=True)
        means = {}
        for mode in (WeightingMode.NONE, WeightingMode.ENERGY):
            model, _ = train_model(index, EncoderConfig(weighting=mode), source)
            means[mode] = mean_off_diagonal(profile_correlation_matrix(model.profiles))
        assert means[WeightingMode.ENERGY] <= means[WeightingMode.NONE]

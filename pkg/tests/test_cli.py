"""Tests for the command line interface."""

import csv
import json

import numpy as np
import pytest

from hdspeaker.__main__ import build_parser, main
from hdspeaker.cli import cmd_classify, cmd_eval, cmd_train
from hdspeaker.dsp import AudioClip, write_wav
from hdspeaker.encoder import EncoderConfig, WeightingMode
from hdspeaker.exceptions import UnclassifiableError
from hdspeaker.pipeline import TrainReport, sidecar_path


class TestParser:
    """Tests for argument parsing."""

    def test_encoder_defaults(self):
        """Flags default to the documented configuration."""
        args = build_parser().parse_args(["train", "data", "-o", "m.hdspk"])
        assert (args.dim, args.ngram, args.alpha, args.weighting) == (1024, 3, 0.3, "normalized")
        assert (args.seed_memory, args.seed_perm, args.bins) == (2022, 2023, 40)
        assert args.p_target is None

    def test_glvq_defaults(self):
        """Refinement defaults: 30 epochs at 0.05, misclassified samples only."""
        args = build_parser().parse_args(["refine", "m.hdspk", "-o", "r.hdspk"])
        assert (args.epochs, args.lr, args.lr_decay, args.gate) == (
            30,
            0.05,
            1.0,
            "misclassified_only",
        )

    def test_sweep_lists(self):
        """Comma-separated orders and modes are parsed."""
        args = build_parser().parse_args(
            ["sweep", "data", "--orders", "1,3", "--modes", "none,energy"]
        )
        assert args.orders == [1, 3]
        assert args.modes == [WeightingMode.NONE, WeightingMode.ENERGY]

    def test_no_command_prints_help(self, capsys):
        """Running without a command shows usage and succeeds."""
        assert main([]) == 0
        assert "usage: hdspeaker" in capsys.readouterr().out


class TestExitCodes:
    """Usage errors exit 1, data errors exit 2."""

    def test_unknown_command(self):
        """argparse errors exit with 1."""
        with pytest.raises(SystemExit) as exc:
            main(["bogus"])
        assert exc.value.code == 1

    def test_bad_weighting_choice(self):
        """Invalid choices are usage errors."""
        with pytest.raises(SystemExit) as exc:
            main(["train", "data", "-o", "m", "--weighting", "loud"])
        assert exc.value.code == 1

    def test_invalid_config(self, tmp_path):
        """An out-of-range N-gram order is a usage error."""
        assert main(["-q", "train", str(tmp_path), "-o", str(tmp_path / "m"), "--ngram", "9"]) == 1

    @pytest.mark.parametrize("value", ["0", "-1", "two"])
    def test_max_speakers_must_be_positive(self, tmp_path, value):
        """--max-speakers below one is a usage error."""
        with pytest.raises(SystemExit) as exc:
            main(["train", str(tmp_path), "-o", str(tmp_path / "m"), "--max-speakers", value])
        assert exc.value.code == 1

    def test_inspect_needs_a_target(self):
        """inspect without a model or speaker directory is a usage error."""
        assert main(["-q", "inspect"]) == 1

    def test_missing_dataset(self, tmp_path):
        """A missing dataset root is a data error."""
        assert main(["-q", "train", str(tmp_path / "none"), "-o", str(tmp_path / "m")]) == 2

    def test_missing_model(self, tmp_path):
        """A missing model file is a data error."""
        assert main(["-q", "classify", str(tmp_path / "m.hdspk"), str(tmp_path / "a.wav")]) == 2

    def test_corrupt_model(self, tmp_path):
        """A file that is not a model is a data error."""
        path = tmp_path / "m.hdspk"
        path.write_bytes(b"definitely not a model")
        assert main(["-q", "inspect", str(path)]) == 2


@pytest.mark.integration
class TestCommands:
    """End-to-end command runs on the tiny synthetic corpus."""

    @pytest.fixture(scope="class")
    def model_path(self, tiny_corpus, tmp_path_factory):
        """A model trained through the CLI."""
        path = tmp_path_factory.mktemp("models") / "tiny.hdspk"
        assert main(["-q", "train", str(tiny_corpus), "-o", str(path)]) == 0
        return path

    def test_train_writes_sidecar(self, model_path):
        """Training leaves a timing report beside the model."""
        report = TrainReport.from_json(sidecar_path(model_path).read_text())
        assert {"index", "encode", "save"} <= set(report.phases)
        assert report.n_utterances == 30

    def test_eval_json(self, model_path, tiny_corpus, capsys):
        """eval --json prints one JSON object."""
        assert main(["-q", "eval", str(model_path), str(tiny_corpus), "--json"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["n_test"] == 3
        assert report["efficiency"] is None or report["efficiency"] > 0

    def test_eval_csv(self, model_path, tiny_corpus, tmp_path):
        """eval --csv writes a header and one row."""
        out = tmp_path / "report.csv"
        assert main(["-q", "eval", str(model_path), str(tiny_corpus), "--csv", str(out)]) == 0
        rows = list(csv.reader(out.open()))
        assert rows[0][0] == "top1"
        assert len(rows) == 2

    def test_classify_training_utterance(self, model_path, tiny_corpus, capsys):
        """A speaker's own training utterance ranks that speaker first."""
        wav = tiny_corpus / "id10002" / "ctx02" / "00001.wav"
        assert main(["-q", "classify", str(model_path), str(wav), "--top", "2"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].split()[:2] == ["1", "id10002"]
        assert len(lines) == 3

    def test_classify_is_deterministic(self, model_path, tiny_corpus):
        """Repeated runs give the same ranking."""
        wav = tiny_corpus / "id10001" / "ctx01" / "00003.wav"
        first, _ = cmd_classify(model_path, wav)
        second, _ = cmd_classify(model_path, wav)
        assert first.entries == second.entries

    def test_classify_silence(self, model_path, tiny_corpus, tmp_path):
        """Silence encodes to nothing, with or without normalization."""
        wav = tmp_path / "silence.wav"
        write_wav(wav, AudioClip(np.zeros(16_000)))
        energy_model = tmp_path / "energy.hdspk"
        cmd_train(tiny_corpus, energy_model, EncoderConfig(weighting=WeightingMode.ENERGY))
        for path in (energy_model, model_path):
            with pytest.raises(UnclassifiableError):
                cmd_classify(path, wav)

    def test_inspect(self, model_path, capsys):
        """inspect describes the model and passes every check."""
        assert main(["-q", "inspect", str(model_path)]) == 0
        out = capsys.readouterr().out
        assert "speakers           3" in out
        assert "[ok] prototypes: 3 unit vectors" in out
        assert "[fail]" not in out

    def test_refine(self, model_path, tmp_path):
        """refine writes the model, an epoch CSV, and a sidecar with GLVQ time."""
        out = tmp_path / "refined.hdspk"
        epochs = tmp_path / "epochs.csv"
        argv = ["-q", "refine", str(model_path), "-o", str(out), "--epochs", "2"]
        assert main([*argv, "--epochs-csv", str(epochs)]) == 0
        rows = list(csv.reader(epochs.open()))
        assert rows[0] == ["epoch", "train_misclassified", "top1", "top5", "top10"]
        assert len(rows) == 4
        report = TrainReport.from_json(sidecar_path(out).read_text())
        assert "glvq" in report.phases
        assert report.active_parameters == 2 * 1024

    def test_eval_counts_glvq_parameters(self, model_path, tiny_corpus, tmp_path):
        """An explicit training time keeps the active-parameter count of the model's history."""
        out = tmp_path / "refined.hdspk"
        assert main(["-q", "refine", str(model_path), "-o", str(out), "--epochs", "1"]) == 0
        one_shot = cmd_eval(model_path, tiny_corpus, train_seconds=10.0)
        refined = cmd_eval(out, tiny_corpus, train_seconds=10.0)
        assert one_shot.efficiency is not None
        assert refined.efficiency is not None
        assert one_shot.efficiency * one_shot.mutual_info_bits == pytest.approx(1024 * 10.0)
        assert refined.efficiency * refined.mutual_info_bits == pytest.approx(2048 * 10.0)

    def test_sweep(self, tiny_corpus, tmp_path):
        """sweep writes one CSV row per setting."""
        out = tmp_path / "sweep.csv"
        argv = ["-q", "sweep", str(tiny_corpus), "--orders", "1,2", "--modes", "energy"]
        assert main([*argv, "--dim", "128", "--csv", str(out)]) == 0
        rows = list(csv.reader(out.open()))
        assert [row[0] for row in rows[1:]] == ["1", "2"]

    def test_synth(self, tmp_path):
        """synth writes the requested tree."""
        root = tmp_path / "corpus"
        argv = ["-q", "synth", str(root), "--speakers", "2", "--contexts", "2"]
        assert main([*argv, "--utterances", "1", "--seconds", "0.5"]) == 0
        assert len(list(root.glob("*/*/*.wav"))) == 4

    def test_bench(self, capsys):
        """bench reports latency and throughput."""
        argv = ["-q", "bench", "--speakers", "10", "--dim", "64", "--repeats", "2"]
        assert main([*argv, "--train-audio", "3"]) == 0
        out = capsys.readouterr().out
        assert "classify" in out
        assert "real time" in out

"""Tests for model diagnostics."""

import dataclasses

import numpy as np
import pytest

from hdspeaker.__main__ import main
from hdspeaker.exceptions import DataError
from hdspeaker.inspect import (
    CheckResult,
    _format_result,
    correlation_report,
    describe,
    power_table,
    run_checks,
)
from hdspeaker.model import save_model


class TestFormatResult:
    """Tests for _format_result()."""

    def test_ok(self):
        """Passing checks are marked ok."""
        assert _format_result(CheckResult("profiles", True, "fine")) == "[ok] profiles: fine"

    def test_fail(self):
        """Failing checks are marked fail."""
        assert _format_result(CheckResult("p_target", False, "missing")) == "[fail] p_target: missing"


@pytest.mark.integration
class TestRunChecks:
    """Tests for run_checks() on trained models."""

    def test_trained_model_passes(self, tiny_model):
        """A freshly trained model passes every check."""
        results = run_checks(tiny_model)
        assert [result.name for result in results] == [
            "seed memory",
            "permutation",
            "prototypes",
            "profiles",
            "contexts",
            "p_target",
        ]
        assert all(result.ok for result in results), [r for r in results if not r.ok]

    def test_scaled_prototypes_fail(self, tiny_model, tmp_path):
        """Prototypes that are no longer unit vectors are reported."""
        tampered = dataclasses.replace(tiny_model, prototypes=tiny_model.prototypes * 2)
        result = {r.name: r for r in run_checks(tampered)}["prototypes"]
        assert not result.ok
        assert "deviate" in result.detail

        path = save_model(tampered, tmp_path / "tampered.hdspk")
        assert main(["-q", "inspect", str(path)]) == 2

    def test_missing_contexts_fail(self, tiny_model):
        """Without training contexts refinement is unavailable."""
        bare = dataclasses.replace(tiny_model, contexts=())
        result = {r.name: r for r in run_checks(bare)}["contexts"]
        assert not result.ok
        assert "refine" in result.detail

    def test_normalized_without_p_target_fails(self, tiny_model):
        """Normalized weighting cannot encode without a target power."""
        config = dataclasses.replace(tiny_model.config, p_target=None)
        result = {r.name: r for r in run_checks(dataclasses.replace(tiny_model, config=config))}
        assert not result["p_target"].ok


@pytest.mark.integration
class TestReports:
    """Tests for describe(), correlation_report() and power_table()."""

    def test_describe(self, tiny_model):
        """The summary lists configuration and counts."""
        lines = describe(tiny_model).splitlines()
        assert "dimension          1024" in lines
        assert "speakers           3" in lines
        assert "contexts           3 training, 3 reserved" in lines
        assert f"stored parameters  {2 * 3 * 1024}" in lines

    def test_correlation_report(self, tiny_model):
        """The CSV covers the first speakers and the mean skips the diagonal."""
        text, mean = correlation_report(tiny_model, first=2)
        rows = text.splitlines()
        assert rows[0] == "speaker,id10001,id10002"
        assert len(rows) == 3
        assert -1.0 <= mean < 1.0

    def test_power_table(self, tiny_corpus):
        """One row per utterance, context and name plus 40 bins in dB."""
        rows = power_table(tiny_corpus / "id10001").splitlines()
        assert len(rows) == 11
        assert all(len(row.split(",")) == 42 for row in rows)
        assert rows[1].split(",")[:2] == ["ctx01", "00001.wav"]
        assert np.isfinite(float(rows[1].split(",")[2]))

    def test_power_table_needs_audio(self, tmp_path):
        """An empty speaker directory is a data error."""
        with pytest.raises(DataError, match="No readable utterances"):
            power_table(tmp_path)

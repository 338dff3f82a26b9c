"""Shared pytest fixtures for hdspeaker tests."""

from pathlib import Path

import numpy as np
import pytest

from hdspeaker.dataset import index_dataset
from hdspeaker.encoder import Encoder, EncoderConfig, WeightingMode
from hdspeaker.model import Model
from hdspeaker.pipeline import train_model
from hdspeaker.synth import SynthConfig, write_corpus


@pytest.fixture
def rng() -> np.random.Generator:
    """A seeded generator so random test data is the same on every run."""
    return np.random.default_rng(20240521)


@pytest.fixture
def small_encoder() -> Encoder:
    """An energy-weighted encoder at D=256, small enough for quick unit tests."""
    return Encoder(EncoderConfig(dim=256, weighting=WeightingMode.ENERGY))


@pytest.fixture(scope="session")
def synth_corpus(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Ten formant speakers, three contexts of five 3 s utterances each."""
    root = tmp_path_factory.mktemp("synth")
    write_corpus(root, SynthConfig())
    return root


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Three speakers with two contexts of five 2 s utterances."""
    root = tmp_path_factory.mktemp("tiny")
    write_corpus(
        root, SynthConfig(n_speakers=3, n_contexts=2, utterances_per_context=5, seconds=2.0)
    )
    return root


@pytest.fixture(scope="session")
def padded_corpus(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Six speakers whose utterances carry about as much exact silence as speech."""
    root = tmp_path_factory.mktemp("padded")
    write_corpus(
        root,
        SynthConfig(
            n_speakers=6,
            n_contexts=3,
            utterances_per_context=5,
            seconds=2.0,
            silence_seconds=2.0,
            seed=1,
        ),
    )
    return root


@pytest.fixture(scope="session")
def tiny_model(tiny_corpus: Path) -> Model:
    """A model trained with default settings on the tiny corpus."""
    model, _ = train_model(index_dataset(tiny_corpus), EncoderConfig())
    return model

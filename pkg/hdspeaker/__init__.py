"""
hdspeaker - speaker identification with hyperdimensional computing

Short-window power spectra are coded as formant rise/fall patterns, bound into
N-gram hypervectors, and summed into speaker profiles in a single pass; GLVQ can
then refine the profiles into sharper prototypes.
"""

from importlib.metadata import version

from .dataset import DatasetIndex, index_dataset
from .dsp import AudioClip, UtteranceSpectra, analyze_file, load_wav, power_spectrum
from .encoder import Encoder, EncoderConfig, WeightingMode
from .evaluation import EvalReport, Ranking, classify, mutual_information, topk_accuracy
from .exceptions import DataError, HdSpeakerError
from .glvq import GlvqConfig, PrototypeSet
from .model import Model, load_model, save_model
from .pipeline import AudioSource, evaluate_model, refine_model, train_model

__version__ = version("hdspeaker")
__all__ = [
    "AudioClip",
    "AudioSource",
    "DataError",
    "DatasetIndex",
    "Encoder",
    "EncoderConfig",
    "EvalReport",
    "GlvqConfig",
    "HdSpeakerError",
    "Model",
    "PrototypeSet",
    "Ranking",
    "UtteranceSpectra",
    "WeightingMode",
    "analyze_file",
    "classify",
    "evaluate_model",
    "index_dataset",
    "load_model",
    "load_wav",
    "mutual_information",
    "power_spectrum",
    "refine_model",
    "save_model",
    "topk_accuracy",
    "train_model",
]

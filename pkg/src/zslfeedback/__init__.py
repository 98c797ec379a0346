"""Zero-shot learning with a triplet-trained encoder, an attribute-conditioned
decoder and a regressor feedback loop, built on numpy.

Submodules: ``tensorcore``, ``net``, ``zslmodel``, ``losses``, ``dataset``,
``pipeline``, ``evalsuite``, ``gradsuite``, ``npyio`` and ``cli``.
"""

from .dataset import SplitSpec, SynthConfig, ZslDataset, synth_generate
from .errors import (ConfigError, ContractError, DatasetError, EvaluationError,
                     FormatError, GradCheckError, MiningError, TrainingError, ZslError)
from .losses import ObjectiveWeights, TripletConfig
from .pipeline import ClassifierConfig, TrainConfig, gzsl_predict, train, zsl_predict
from .zslmodel import FeedbackConfig, ZslModel, build_model, generate_unseen

__version__ = "0.1.0"

__all__ = [
    "ClassifierConfig", "ConfigError", "ContractError", "DatasetError",
    "EvaluationError", "FeedbackConfig", "FormatError", "GradCheckError",
    "MiningError", "ObjectiveWeights", "SplitSpec", "SynthConfig", "TrainConfig",
    "TrainingError", "TripletConfig", "ZslDataset", "ZslError", "ZslModel",
    "build_model", "generate_unseen", "gzsl_predict", "synth_generate", "train",
    "zsl_predict",
]

"""Citation sentiment and intent classification: corpus harmonization,
training schedules, from-scratch numpy encoders, training and evaluation."""

from .corpus import DatasetManifest, HarmonizedRecord, dedup_clean, harmonize, ingest, make_folds, split, stats
from .estimator import TextClassifier
from .evaluation import cross_domain_matrix, cross_validate, evaluate_labels, evaluate_model
from .manifest import RunManifest
from .model import EncoderConfig, LossSpec, ModelConfig, TextModel
from .schedule import SamplingSpec, build_multitask, build_sequential, build_shuffled, normalize_sizes
from .smote import SmoteSampler, smote_augment
from .train import TrainConfig, TrainLog, fine_tune, train_multitask

__version__ = "0.1.0"

__all__ = [
    "DatasetManifest",
    "EncoderConfig",
    "HarmonizedRecord",
    "LossSpec",
    "ModelConfig",
    "RunManifest",
    "SamplingSpec",
    "SmoteSampler",
    "TextClassifier",
    "TextModel",
    "TrainConfig",
    "TrainLog",
    "build_multitask",
    "build_sequential",
    "build_shuffled",
    "cross_domain_matrix",
    "cross_validate",
    "dedup_clean",
    "evaluate_labels",
    "evaluate_model",
    "fine_tune",
    "harmonize",
    "ingest",
    "make_folds",
    "normalize_sizes",
    "smote_augment",
    "split",
    "stats",
    "train_multitask",
]

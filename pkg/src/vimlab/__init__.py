"""Stochastic classifiers trained with cross-entropy, VIB or VIM objectives."""

from .data import Dataset, load_mnist, synthetic_blobs
from .model import LatentBatch, StochasticClassifier, sample_latent
from .objectives import ObjectiveSpec, Variant, gauss_kl, kernel, loss, mmd, nll
from .optim import AdamState, ExperimentReport, TrainConfig, adam_step, train
from .tensor import Tensor

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Dataset",
    "ExperimentReport",
    "LatentBatch",
    "ObjectiveSpec",
    "StochasticClassifier",
    "Tensor",
    "TrainConfig",
    "Variant",
    "adam_step",
    "gauss_kl",
    "kernel",
    "load_mnist",
    "loss",
    "mmd",
    "nll",
    "sample_latent",
    "synthetic_blobs",
    "train",
]

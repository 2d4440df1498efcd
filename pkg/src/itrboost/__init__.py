"""Gradient tree boosting for individualized treatment rules."""

from .boosting import BoostedEnsemble, HyperParams, RegressionTree, predict, train
from .data import Dataset, PropensitySpec, load_csv, write_csv
from .evaluate import estimate_value, misclassification, welch_test
from .itr import METHODS, ItrPolicy, fit_method
from .losses import SquaredLoss, WeightedDevianceLoss, WeightedSquaredLoss
from .sim import ScenarioSpec, generate

__version__ = "0.1.0"

__all__ = [
    "BoostedEnsemble", "HyperParams", "RegressionTree", "predict", "train",
    "Dataset", "PropensitySpec", "load_csv", "write_csv",
    "estimate_value", "misclassification", "welch_test",
    "METHODS", "ItrPolicy", "fit_method",
    "SquaredLoss", "WeightedDevianceLoss", "WeightedSquaredLoss",
    "ScenarioSpec", "generate",
]

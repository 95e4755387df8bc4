"""Bayesian MLPs with automatic relevance determination for credit default prediction.

Two inference engines share one network and posterior:

* :class:`HMCClassifier` - Hamiltonian Monte Carlo with Gibbs-sampled ARD precisions;
* :class:`LaplaceClassifier` - Gaussian approximation with evidence re-estimation.
"""
from .data import Dataset, MinMaxScaler, load_taiwan_csv, split_70_30
from .estimators import HMCClassifier, LaplaceClassifier
from .exceptions import (ArdBnnError, ArtifactError, DataParseError, DivergenceError,
                         EmptyInputError, InputShapeError, NumericalError,
                         UndefinedMetricError, UnsupportedModelError)
from .metrics import ard_relevance, auc, confusion_matrix, roc_curve
from .network import MlpParameters, NetworkShape

__version__ = "0.1.0"

__all__ = [
    "ArdBnnError", "ArtifactError", "DataParseError", "Dataset", "DivergenceError",
    "EmptyInputError", "HMCClassifier", "InputShapeError", "LaplaceClassifier",
    "MinMaxScaler", "MlpParameters", "NetworkShape", "NumericalError",
    "UndefinedMetricError", "UnsupportedModelError", "ard_relevance", "auc",
    "confusion_matrix", "load_taiwan_csv", "roc_curve", "split_70_30",
]

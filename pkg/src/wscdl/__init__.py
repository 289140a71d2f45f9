"""Weakly supervised convolutional dictionary learning (MIML-CDL).

Learns a shared background dictionary plus per-class convolutional
dictionaries from bag-labeled signals, and predicts bag-level multi-labels
through a learnable pooled projection.
"""

from wscdl.core import (
    Bag,
    CoefficientSet,
    ConfigError,
    DataError,
    DictionaryModel,
    Hyperparams,
    Projection,
    validate_dataset,
)

__all__ = [
    "Bag",
    "CoefficientSet",
    "ConfigError",
    "DataError",
    "DictionaryModel",
    "Hyperparams",
    "Projection",
    "validate_dataset",
]

__version__ = "0.1.0"

"""Class-rebalancing self-training for imbalanced multiclass classification.

Includes a reference numpy classifier, multiclass metrics, a kernel SHAP
explainer, byte-level corpus deduplication and a config-driven experiment
harness (``isdl`` on the command line).
"""

from .classifier import MLPClassifier, TrainConfig
from .data import LabeledDataset, SplitRatios, SyntheticSpec, UnlabeledPool, make_synthetic, stratified_split
from .kernel_shap import ExplainerConfig, exact_shapley, explain, kernel_shap
from .metrics import MetricsReport, evaluate
from .selftrain import SelfTrainConfig, sampling_schedule, self_train

__version__ = "0.1.0"

__all__ = [
    "MLPClassifier",
    "TrainConfig",
    "LabeledDataset",
    "UnlabeledPool",
    "SplitRatios",
    "SyntheticSpec",
    "make_synthetic",
    "stratified_split",
    "ExplainerConfig",
    "exact_shapley",
    "explain",
    "kernel_shap",
    "MetricsReport",
    "evaluate",
    "SelfTrainConfig",
    "sampling_schedule",
    "self_train",
]

"""Leaf disease classification: segmentation, texture features, SVMs and a
bag-of-visual-words healthy/diseased gate."""
__version__ = "0.1.0"

from .bovw import HealthGate
from .features import FEATURE_NAMES, extract_feature_vector
from .metrics import ConfusionMatrix, report
from .pipeline import LeafFeatureExtractor, TwoStageModel
from .preprocessing import Standardizer
from .segmentation import diseased_region_mask, leaf_mask
from .selection import ForwardSelector, ReliefFSelector
from .svm import OneVsOneSVC

__all__ = [
    "FEATURE_NAMES", "ConfusionMatrix", "ForwardSelector", "HealthGate",
    "LeafFeatureExtractor", "OneVsOneSVC", "ReliefFSelector", "Standardizer",
    "TwoStageModel", "diseased_region_mask", "extract_feature_vector",
    "leaf_mask", "report",
]

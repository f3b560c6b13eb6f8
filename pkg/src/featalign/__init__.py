"""Feature-alignment detection and rectification of adversarial images, at desk scale."""

__version__ = "0.1.0"

from .alignment import DefenseOutcome, Detection, decide, detect, jaccard, rectify, unmask_pipeline
from .attacks import AttackConfig, AttackResult, attack_batch, mia, pgd, project
from .dataset import Dataset, Sample
from .features import ClassFeatureMatrix, ClassSet, FeatureVocabulary, class_set_stats, load_expanded, load_matrix
from .tinynet import TinyNet

__all__ = [
    "AttackConfig", "AttackResult", "ClassFeatureMatrix", "ClassSet", "Dataset", "DefenseOutcome",
    "Detection", "FeatureVocabulary", "Sample", "TinyNet", "attack_batch", "class_set_stats", "decide",
    "detect", "jaccard", "load_expanded", "load_matrix", "mia", "pgd", "project", "rectify",
    "unmask_pipeline",
]

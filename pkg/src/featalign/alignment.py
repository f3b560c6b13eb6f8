"""Feature-alignment detection and rectification.

A prediction is checked by comparing the features an extractor finds in the
image against the features the predicted class should have. Low Jaccard
similarity flags an attack; the input is then re-labelled with the class
whose feature row matches the extracted features best.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tinynet
from .extractor import DEFAULT_CUTOFF, to_feature_set
from .features import ClassFeatureMatrix, ClassSet

MODES = ("detect_then_rectify", "always_rectify")
BENIGN, ADVERSARIAL = 1, -1


def jaccard(a: frozenset, b: frozenset) -> float:
    """|a & b| / |a | b|, with 0 for two empty sets."""
    union = len(a | b)
    if union == 0:
        return 0.0
    return len(a & b) / union


@dataclass(frozen=True)
class Detection:
    similarity: float
    distance: float
    threshold: float
    verdict: int


@dataclass(frozen=True)
class DefenseOutcome:
    detection: Detection
    predicted_class: str
    model_class: str
    rectified: bool


def detect(extracted: frozenset, expected: frozenset, t: float) -> Detection:
    """Flag as adversarial (-1) when the Jaccard distance reaches the threshold."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    s = jaccard(extracted, expected)
    d = 1.0 - s
    return Detection(s, d, t, ADVERSARIAL if d >= t else BENIGN)


def _members(matrix: ClassFeatureMatrix, classes) -> list[str]:
    names = classes.classes if isinstance(classes, ClassSet) else tuple(classes)
    wanted = set(names)
    return [c for c in matrix.classes if c in wanted]


def similarity_scores(extracted: frozenset, matrix: ClassFeatureMatrix, classes) -> dict[str, float]:
    return {c: jaccard(extracted, matrix[c]) for c in _members(matrix, classes)}


def rectify(extracted: frozenset, matrix: ClassFeatureMatrix, classes: ClassSet | Sequence[str]) -> str:
    """Class whose row has the highest Jaccard similarity; ties go to the earliest class in the matrix."""
    scores = similarity_scores(extracted, matrix, classes)
    if not scores:
        raise ValueError("class set is empty")
    best, best_s = None, -1.0
    for c, s in scores.items():
        if s > best_s:
            best, best_s = c, s
    return best


def decide(
    extracted: frozenset,
    model_class: str,
    matrix: ClassFeatureMatrix,
    classes,
    t: float,
    mode: str = "detect_then_rectify",
) -> DefenseOutcome:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    det = detect(extracted, matrix[model_class], t)
    if mode == "always_rectify" or det.verdict == ADVERSARIAL:
        p = rectify(extracted, matrix, classes)
    else:
        p = model_class
    return DefenseOutcome(det, p, model_class, det.verdict == ADVERSARIAL)


def unmask_pipeline(
    sample,
    model: tinynet.TinyNet,
    extractor,
    matrix: ClassFeatureMatrix,
    classes,
    t: float = 0.5,
    mode: str = "detect_then_rectify",
    cutoff: float = DEFAULT_CUTOFF,
) -> DefenseOutcome:
    """Classify with the model, extract features, then detect and (maybe) rectify."""
    y_hat = model.labels[int(tinynet.predict(model, sample.image))]
    f_r = to_feature_set(extractor.extract(sample), cutoff)
    return decide(f_r, y_hat, matrix, classes, t, mode)


def pipeline_batch(
    data,
    model: tinynet.TinyNet,
    extractor,
    matrix: ClassFeatureMatrix,
    classes,
    t: float = 0.5,
    mode: str = "detect_then_rectify",
    cutoff: float = DEFAULT_CUTOFF,
) -> list[DefenseOutcome]:
    """Vectorised ``unmask_pipeline`` over a Dataset."""
    preds = np.atleast_1d(tinynet.predict(model, data.images))
    results = extractor.extract_batch(data)
    return [
        decide(to_feature_set(r, cutoff), model.labels[int(p)], matrix, classes, t, mode)
        for p, r in zip(preds, results)
    ]

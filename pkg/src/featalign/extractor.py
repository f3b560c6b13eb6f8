"""Robust-feature extractors.

All extractors expose ``extract(sample)`` returning an ExtractionResult and
``extract_batch(dataset)`` returning one result per sample.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tinynet
from .dataset import Dataset, Sample

DEFAULT_CUTOFF = 0.5


@dataclass(frozen=True)
class ExtractionResult:
    detections: tuple[tuple[str, float], ...]

    def __post_init__(self):
        names = [f for f, _ in self.detections]
        if len(set(names)) != len(names):
            raise ValueError("at most one detection per feature")
        for f, c in self.detections:
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"confidence {c} for {f!r} outside [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractionResult":
        return cls(tuple(sorted((str(k), float(v)) for k, v in d.items())))

    def as_dict(self) -> dict:
        return dict(self.detections)


def to_feature_set(result: ExtractionResult, cutoff: float = DEFAULT_CUTOFF) -> frozenset:
    if not 0.0 <= cutoff <= 1.0:
        raise ValueError("cutoff must lie in [0, 1]")
    return frozenset(f for f, c in result.detections if c >= cutoff)


@dataclass(frozen=True)
class ExtractorNoise:
    p_miss: float = 0.4
    p_spur: float = 0.05

    def __post_init__(self):
        for v in (self.p_miss, self.p_spur):
            if not 0.0 <= v <= 1.0:
                raise ValueError("noise probabilities must lie in [0, 1]")


class OracleExtractor:
    """Reports the sample's ground-truth features, corrupted by seeded miss/spurious noise.

    Noise for a sample depends only on (sample id, seed), so a benign sample
    and its attacked copy get identical extractions.
    """

    def __init__(self, features: Sequence[str], noise: ExtractorNoise | None = None, seed: int = 0):
        self.features = tuple(features)
        self.noise = noise or ExtractorNoise(0.0, 0.0)
        self.seed = seed

    def extract(self, sample: Sample) -> ExtractionResult:
        rng = np.random.default_rng([self.seed, zlib.crc32(sample.id.encode())])
        u = rng.random(len(self.features))
        found = {}
        for f, r in zip(self.features, u):
            if f in sample.truth_features:
                if r >= self.noise.p_miss:
                    found[f] = 1.0
            elif r < self.noise.p_spur:
                found[f] = 1.0
        return ExtractionResult.from_dict(found)

    def extract_batch(self, data: Dataset) -> list[ExtractionResult]:
        return [self.extract(s) for s in data]


class NetExtractor:
    """A sigmoid multi-label TinyNet; looks at pixels only."""

    def __init__(self, net: tinynet.TinyNet):
        if net.head != "sigmoid":
            raise ValueError("extractor nets need a sigmoid head")
        self.net = net
        self.features = net.labels

    def confidences(self, images) -> np.ndarray:
        return tinynet.forward(self.net, images)

    def _result(self, conf) -> ExtractionResult:
        return ExtractionResult(tuple((f, float(c)) for f, c in zip(self.features, conf)))

    def extract(self, sample: Sample) -> ExtractionResult:
        return self._result(self.confidences(sample.image))

    def extract_batch(self, data: Dataset) -> list[ExtractionResult]:
        return [self._result(c) for c in self.confidences(data.images)]


class FileExtractor:
    """Looks detections up by sample id in a JSON-lines file."""

    def __init__(self, records: dict[str, ExtractionResult]):
        self.records = records

    @classmethod
    def from_file(cls, path: str | Path) -> "FileExtractor":
        records = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    dets = tuple((str(f), float(c)) for f, c in rec["detections"])
                    records[str(rec["id"])] = ExtractionResult(dets)
                except (ValueError, KeyError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad detection record ({exc})") from None
        return cls(records)

    def extract(self, sample: Sample) -> ExtractionResult:
        try:
            return self.records[sample.id]
        except KeyError:
            raise KeyError(f"no detections for sample id {sample.id!r}") from None

    def extract_batch(self, data: Dataset) -> list[ExtractionResult]:
        return [self.extract(s) for s in data]


def export_detections(extractor, data: Dataset, path: str | Path) -> None:
    with open(path, "w") as fh:
        for sid, res in zip(data.ids, extractor.extract_batch(data)):
            rec = {"id": sid, "detections": [[f, round(c, 6)] for f, c in res.detections]}
            fh.write(json.dumps(rec) + "\n")


def train_extractor(
    data: Dataset,
    hidden: Sequence[int] = (64,),
    epochs: int = 20,
    lr: float = 0.01,
    seed: int = 0,
    batch_size: int = 32,
) -> NetExtractor:
    """Fit a multi-label net to the truth-feature bit vectors with binary cross-entropy."""
    if len(data) == 0:
        raise ValueError("cannot train an extractor on an empty dataset")
    center, scale = tinynet.standardizer(data.images)
    arch = tinynet.mlp(data.image_shape, hidden, data.features, "sigmoid", center, scale)
    net = tinynet.init(arch, seed)
    net, _ = tinynet.train(net, data.images, data.truth.astype(np.float64), epochs, lr, seed, batch_size)
    return NetExtractor(net)


def mean_feature_f1(extractor, data: Dataset, cutoff: float = DEFAULT_CUTOFF) -> float:
    """Macro-averaged per-feature F1 over features that occur or are predicted."""
    sets = [to_feature_set(r, cutoff) for r in extractor.extract_batch(data)]
    scores = []
    for j, f in enumerate(data.features):
        truth = data.truth[:, j]
        pred = np.array([f in s for s in sets])
        tp = int((truth & pred).sum())
        denom = int(truth.sum() + pred.sum())
        if denom == 0:
            continue
        scores.append(2 * tp / denom)
    return float(np.mean(scores)) if scores else 0.0

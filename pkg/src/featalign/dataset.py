"""In-memory labelled image datasets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Sample:
    image: np.ndarray
    label: str
    truth_features: frozenset
    id: str


@dataclass
class Dataset:
    """Images ``(n, H, W, C)`` in [0, 1] with class indices and truth-feature bit vectors.

    ``truth[i, j]`` says whether ``features[j]`` is visibly present in sample i.
    """

    images: np.ndarray
    labels: np.ndarray
    truth: np.ndarray
    ids: tuple[str, ...]
    classes: tuple[str, ...]
    features: tuple[str, ...]

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.truth = np.asarray(self.truth, dtype=bool)
        self.ids = tuple(self.ids)
        self.classes = tuple(self.classes)
        self.features = tuple(self.features)
        n = len(self.ids)
        if self.images.ndim != 4 or len(self.images) != n or len(self.labels) != n:
            raise ValueError("images, labels and ids must agree in length")
        if self.truth.shape != (n, len(self.features)):
            raise ValueError("truth matrix has the wrong shape")
        if len(set(self.ids)) != n:
            raise ValueError("sample ids must be unique")
        if n and ((self.labels < 0).any() or (self.labels >= len(self.classes)).any()):
            raise ValueError("label index out of range")

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, i: int) -> Sample:
        return Sample(
            image=self.images[i],
            label=self.classes[self.labels[i]],
            truth_features=self.truth_set(i),
            id=self.ids[i],
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def image_shape(self) -> tuple[int, ...]:
        return tuple(self.images.shape[1:])

    def truth_set(self, i: int) -> frozenset:
        return frozenset(f for f, on in zip(self.features, self.truth[i]) if on)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        idx = idx.astype(np.int64)
        return Dataset(
            self.images[idx],
            self.labels[idx],
            self.truth[idx],
            tuple(self.ids[i] for i in idx),
            self.classes,
            self.features,
        )

    def with_images(self, images) -> "Dataset":
        return Dataset(images, self.labels.copy(), self.truth.copy(), self.ids, self.classes, self.features)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.ids == other.ids
            and self.classes == other.classes
            and self.features == other.features
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.truth, other.truth)
            and self.images.shape == other.images.shape
            and np.array_equal(self.images, other.images)
        )

    @classmethod
    def concat(cls, parts: list["Dataset"]) -> "Dataset":
        first = parts[0]
        return cls(
            np.concatenate([p.images for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.truth for p in parts]),
            tuple(i for p in parts for i in p.ids),
            first.classes,
            first.features,
        )

    @classmethod
    def empty_like(cls, other: "Dataset") -> "Dataset":
        return other.subset(np.zeros(0, dtype=np.int64))

"""Synthetic feature-blob images.

Every robust feature of a class set owns a fixed square slot on the image and
a fixed +/- contrast stamp. A sample of class c shows the stamps of (a random
subset of) c's features on a noisy grey background. The background also
carries a faint class-specific texture: a useful but non-robust cue that a
pixel classifier picks up and a small perturbation can overwrite.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, Sample
from .features import ClassFeatureMatrix, ClassSet, class_set_features


@dataclass(frozen=True)
class LayoutSpec:
    height: int
    width: int
    channels: int
    patch: int
    positions: dict  # feature -> (row, col) of the slot's top-left pixel
    patterns: dict  # feature -> (patch, patch) array of +/-1
    classes: tuple[str, ...]
    textures: dict = field(default_factory=dict)  # class -> (H, W) array of +/-1
    sigma: float = 0.03
    contrast: float = 0.25
    texture_amp: float = 0.05
    min_visibility: float = 0.2

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)

    @property
    def features(self) -> tuple[str, ...]:
        return tuple(self.positions)


def slot_grid(height: int, width: int, patch: int) -> list[tuple[int, int]]:
    rows, cols = height // patch, width // patch
    off_r = (height - rows * patch) // 2
    off_c = (width - cols * patch) // 2
    return [(off_r + r * patch, off_c + c * patch) for r in range(rows) for c in range(cols)]


def feature_layout(
    matrix: ClassFeatureMatrix,
    classes: ClassSet,
    seed: int,
    height: int = 32,
    width: int = 32,
    channels: int = 1,
    patch: int = 5,
    sigma: float = 0.03,
    contrast: float = 0.25,
    texture_amp: float = 0.05,
    min_visibility: float = 0.2,
) -> LayoutSpec:
    """Assign every feature of the class set its own slot and stamp."""
    feats = class_set_features(matrix, classes)
    slots = slot_grid(height, width, patch)
    if len(feats) > len(slots):
        raise ValueError(f"{len(feats)} features do not fit in {len(slots)} slots")
    rng = np.random.default_rng([seed, 0x1A7])
    order = rng.permutation(len(slots))[: len(feats)]
    positions = {f: slots[i] for f, i in zip(feats, order)}
    patterns = {}
    for f in feats:
        prng = np.random.default_rng([seed, zlib.crc32(f.encode())])
        p = prng.choice([-1.0, 1.0], size=(patch, patch))
        # keep stamps balanced so they do not shift mean brightness
        while abs(p.sum()) > 1:
            p = prng.choice([-1.0, 1.0], size=(patch, patch))
        patterns[f] = p
    textures = {}
    for c in classes.classes:
        trng = np.random.default_rng([seed, zlib.crc32(c.encode()), 7])
        textures[c] = trng.choice([-1.0, 1.0], size=(height, width))
    return LayoutSpec(
        height, width, channels, patch, positions, patterns, tuple(classes.classes),
        textures, sigma, contrast, texture_amp, min_visibility,
    )


def _background(rng, layout: LayoutSpec, cls: str | None) -> np.ndarray:
    img = 0.5 + layout.sigma * rng.standard_normal((layout.height, layout.width))
    strength = rng.uniform(0.0, 2.0)
    if cls is not None and layout.texture_amp:
        # per-sample strength spreads the classifier's margins
        img = img + strength * layout.texture_amp * layout.textures[cls]
    return img


def stamp(img: np.ndarray, layout: LayoutSpec, features, visibility: float = 1.0) -> np.ndarray:
    p = layout.patch
    for f in features:
        r, c = layout.positions[f]
        img[r:r + p, c:c + p] = 0.5 + visibility * layout.contrast * layout.patterns[f]
    return img


def _finish(img: np.ndarray, layout: LayoutSpec) -> np.ndarray:
    img = np.clip(img, 0.0, 1.0).astype(np.float32).astype(np.float64)
    return np.repeat(img[:, :, None], layout.channels, axis=2)


def render_sample(
    cls: str,
    matrix: ClassFeatureMatrix,
    layout: LayoutSpec,
    drop_p: float,
    seed,
    sample_id: str | None = None,
) -> Sample:
    """Draw one image of ``cls``; each feature survives with probability 1 - drop_p (at least one does)."""
    if not 0.0 <= drop_p < 1.0:
        raise ValueError("drop_p must lie in [0, 1)")
    row = [f for f in layout.features if f in matrix.expected_features(cls)]
    rng = np.random.default_rng(seed)
    keep = rng.random(len(row)) >= drop_p
    if not keep.any():
        keep[rng.integers(len(row))] = True
    kept = [f for f, k in zip(row, keep) if k]
    visibility = rng.uniform(layout.min_visibility, 1.0)
    img = stamp(_background(rng, layout, cls), layout, kept, visibility)
    if sample_id is None:
        sample_id = f"{cls}-{seed}"
    return Sample(_finish(img, layout), cls, frozenset(kept), sample_id)


def generate_dataset(
    matrix: ClassFeatureMatrix,
    classes: ClassSet,
    per_class: int,
    drop_p: float,
    seed: int,
    split=(0.8, 0.1, 0.1),
    layout: LayoutSpec | None = None,
) -> tuple[Dataset, Dataset, Dataset]:
    """Balanced train/val/test splits; every split holds the same count per class."""
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if len(split) != 3 or min(split) < 0 or abs(sum(split) - 1.0) > 1e-9:
        raise ValueError("split fractions must be three non-negative numbers summing to 1")
    if layout is None:
        layout = feature_layout(matrix, classes, seed)
    n_train = int(round(split[0] * per_class))
    n_val = min(int(round(split[1] * per_class)), per_class - n_train)
    bounds = (0, n_train, n_train + n_val, per_class)

    feats = layout.features
    parts: list[list] = [[], [], []]
    tag = classes.name or "cs"
    for ci, cls in enumerate(classes.classes):
        for i in range(per_class):
            s = render_sample(cls, matrix, layout, drop_p, [seed, ci, i], f"{tag}-{cls}-{i:05d}".lower().replace(" ", "_"))
            k = 0 if i < bounds[1] else 1 if i < bounds[2] else 2
            parts[k].append((s, ci))

    def build(items) -> Dataset:
        shape = (0, *layout.shape)
        if not items:
            return Dataset(np.zeros(shape), [], np.zeros((0, len(feats)), bool), (), classes.classes, feats)
        return Dataset(
            np.stack([s.image for s, _ in items]),
            [ci for _, ci in items],
            np.array([[f in s.truth_features for f in feats] for s, _ in items]),
            tuple(s.id for s, _ in items),
            classes.classes,
            feats,
        )

    return build(parts[0]), build(parts[1]), build(parts[2])

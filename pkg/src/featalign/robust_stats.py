"""Empirical usefulness / robustness estimates for scalar image features.

Labels follow the +/-1 convention: a feature f is p-useful when E[y f(X)] >= p
and gamma-robust when E[inf_{delta in S} y f(X + delta)] >= gamma, with S an
L-inf or L2 ball. Multi-class data is handled one-vs-rest.

The robust dataset keeps the stamps of a chosen set of robust features and
re-draws every other pixel from label-independent noise, so any feature
outside that set loses its correlation with the label.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .datagen import LayoutSpec, _finish, stamp
from .dataset import Dataset

P_MIN = 0.05
CATEGORIES = ("p-useful", "gamma-robust", "useful-non-robust", "neither")


@dataclass(frozen=True)
class FeatureFunction:
    """Batched scalar feature: ``fn(X)`` maps ``(n, ...)`` images to ``(n,)`` values.

    ``grad``, when given, returns d f / d X with the shape of X.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, X) -> np.ndarray:
        out = np.asarray(self.fn(np.asarray(X, dtype=np.float64)), dtype=np.float64)
        if not np.isfinite(out).all():
            raise ValueError(f"feature {self.name!r} produced non-finite values")
        return out


@dataclass(frozen=True)
class UsefulnessReport:
    name: str
    p: float
    gamma: Optional[float]
    category: str
    probe_only: bool = False


def one_vs_rest(labels, cls_index: int) -> np.ndarray:
    return np.where(np.asarray(labels) == cls_index, 1.0, -1.0)


def _check_labels(X, y):
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("empty dataset")
    if not np.isin(y, (-1.0, 1.0)).all():
        raise ValueError("labels must be +1 or -1")
    if len(X) != len(y):
        raise ValueError("inputs and labels disagree in length")
    return y


def usefulness(f: FeatureFunction, X, y) -> float:
    """Sample mean of y * f(X)."""
    y = _check_labels(X, y)
    return float(np.mean(y * f(X)))


def _corners(rng, shape, norm: str, eps: float) -> np.ndarray:
    n = shape[0]
    if norm == "Linf":
        return eps * rng.choice([-1.0, 1.0], size=shape)
    v = rng.standard_normal(shape).reshape(n, -1)
    v *= eps / np.linalg.norm(v, axis=1, keepdims=True)
    return v.reshape(shape)


def _project(d: np.ndarray, norm: str, eps: float) -> np.ndarray:
    if norm == "Linf":
        return np.clip(d, -eps, eps)
    flat = d.reshape(len(d), -1)
    n = np.linalg.norm(flat, axis=1, keepdims=True)
    scale = np.where(n > eps, eps / np.maximum(n, 1e-300), 1.0)
    return (flat * scale).reshape(d.shape)


def _descent_step(g: np.ndarray, norm: str) -> np.ndarray:
    if norm == "Linf":
        return np.sign(g)
    flat = g.reshape(len(g), -1)
    n = np.linalg.norm(flat, axis=1, keepdims=True)
    return np.divide(flat, n, out=np.zeros_like(flat), where=n > 0).reshape(g.shape)


def worst_case_values(
    f: FeatureFunction,
    X,
    y,
    eps: float,
    norm: str = "Linf",
    steps: int = 20,
    probes: int = 32,
    seed: int = 0,
) -> tuple[np.ndarray, bool]:
    """Per-sample upper bound on inf over the eps-ball of y * f(X + delta).

    Takes the minimum over the unperturbed point, ``probes`` random points on
    the ball's boundary (corners for L-inf) and, when f has a gradient, a
    projected signed-gradient descent path. Returns the values and whether
    the estimate is probe-only.
    """
    X = np.asarray(X, dtype=np.float64)
    y = _check_labels(X, y)
    yb = y.reshape((-1,) + (1,) * (X.ndim - 1))
    best = y * f(X)
    if eps == 0:
        return best, f.grad is None
    rng = np.random.default_rng(seed)
    for _ in range(probes):
        best = np.minimum(best, y * f(X + _corners(rng, X.shape, norm, eps)))
    if f.grad is not None:
        delta = np.zeros_like(X)
        step = 2.5 * eps / steps
        for _ in range(steps):
            g = yb * np.asarray(f.grad(X + delta), dtype=np.float64)
            delta = _project(delta - step * _descent_step(g, norm), norm, eps)
            best = np.minimum(best, y * f(X + delta))
    return best, f.grad is None


def robustness(
    f: FeatureFunction,
    X,
    y,
    eps: float,
    norm: str = "Linf",
    steps: int = 20,
    probes: int = 32,
    seed: int = 0,
) -> float:
    """Estimated gamma (an upper bound on the true inf-based value).

    ``eps`` is in [0, 1] pixel units; the ball is not clipped to the image range.
    """
    vals, probe_only = worst_case_values(f, X, y, eps, norm, steps, probes, seed)
    if probe_only and eps > 0:
        warnings.warn(f"feature {f.name!r} has no gradient; gamma estimated from random probes only")
    return float(np.mean(vals))


def categorize(p: float, gamma: Optional[float], p_min: float = P_MIN) -> str:
    if p <= p_min:
        return "neither"
    if gamma is None:
        return "p-useful"
    return "gamma-robust" if gamma > 0 else "useful-non-robust"


def assess(f: FeatureFunction, X, y, eps: Optional[float] = None, norm: str = "Linf", **kw) -> UsefulnessReport:
    p = usefulness(f, X, y)
    gamma, probe_only = None, f.grad is None
    if eps is not None:
        vals, probe_only = worst_case_values(f, X, y, eps, norm, **kw)
        gamma = float(np.mean(vals))
    return UsefulnessReport(f.name, p, gamma, categorize(p, gamma), probe_only)


def write_reports(reports: Iterable[UsefulnessReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "p", "gamma", "category"])
        for r in reports:
            gamma = "" if r.gamma is None else f"{r.gamma:.6f}"
            w.writerow([r.name, f"{r.p:.6f}", gamma, r.category])


def linear_feature(weights, bias: float = 0.0, name: str = "linear") -> FeatureFunction:
    w = np.asarray(weights, dtype=np.float64)

    def fn(X):
        return X.reshape(len(X), -1) @ w.ravel() + bias

    def grad(X):
        return np.broadcast_to(w, X.shape).copy()

    return FeatureFunction(name, fn, grad)


def patch_response(layout: LayoutSpec, feature: str) -> FeatureFunction:
    """Mean of (pixel - 0.5) * stamp over the feature's slot; linear in the image."""
    w = np.zeros(layout.shape)
    r, c = layout.positions[feature]
    p = layout.patch
    w[r:r + p, c:c + p, :] = layout.patterns[feature][:, :, None] / (p * p * layout.channels)
    bias = -0.5 * w.sum()
    return linear_feature(w, bias, name=f"response[{feature}]")


def patch_indicator(layout: LayoutSpec, feature: str, level: float = 0.5) -> FeatureFunction:
    """1 when the slot's response exceeds ``level`` times the stamp contrast, else 0."""
    resp = patch_response(layout, feature)
    cut = level * layout.contrast * layout.min_visibility

    def fn(X):
        return (resp(X) > cut).astype(np.float64)

    return FeatureFunction(f"present[{feature}]", fn)


def build_robust_dataset(data: Dataset, robust_features, layout: LayoutSpec, seed: int = 0) -> Dataset:
    """Re-render each sample with only the stamps of its robust truth features.

    All other pixels, including the class texture, are replaced by
    label-independent noise. Stamps are redrawn at the visibility they had in
    the source image.
    """
    robust = frozenset(robust_features)
    if tuple(data.image_shape) != layout.shape:
        raise ValueError("dataset images do not match the layout")
    missing = set(data.features) - set(layout.positions)
    if missing:
        raise ValueError(f"layout has no slot for {sorted(missing)}")
    rng = np.random.default_rng([seed, 0xD4])
    out = np.empty_like(data.images)
    for i in range(len(data)):
        kept = [f for f, on in zip(data.features, data.truth[i]) if on and f in robust]
        img = 0.5 + layout.sigma * rng.standard_normal((layout.height, layout.width))
        vis = _visibility(data.images[i], layout, data.truth_set(i))
        out[i] = _finish(stamp(img, layout, kept, vis), layout)
    return data.with_images(out)


def _visibility(image: np.ndarray, layout: LayoutSpec, present) -> float:
    """Recover the stamp visibility of a rendered image from one of its stamps."""
    p = layout.patch
    for f in layout.features:
        if f in present:
            r, c = layout.positions[f]
            patch = image[r:r + p, c:c + p, 0] - 0.5
            v = float(np.sum(patch * layout.patterns[f]) / (p * p * layout.contrast))
            return min(max(v, 0.0), 1.0)
    return 1.0

"""Untargeted gradient attacks on a TinyNet: PGD and momentum iterative FGSM.

Epsilons and step sizes are given in 0-255 intensity units and divided by 255
internally; images live in [0, 1]. For the L2 norm the epsilon is the budget
over the whole image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import tinynet
from .tinynet import TinyNet

METHODS = ("PGD", "MIA")
NORMS = ("Linf", "L2")

# Image area the whole-image L2 budgets are quoted for; smaller images get shrunk budgets.
REFERENCE_PIXELS = 224 * 224


@dataclass(frozen=True)
class AttackConfig:
    method: str = "PGD"
    norm: str = "Linf"
    epsilon_255: float = 8.0
    steps: int = 20
    step_255: float = 2.0
    decay: float = 1.0
    random_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown attack method {self.method!r}")
        if self.norm not in NORMS:
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.epsilon_255 < 0:
            raise ValueError("epsilon must be non-negative")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.step_255 <= 0:
            raise ValueError("step must be positive")
        if self.decay < 0:
            raise ValueError("decay must be non-negative")

    @property
    def eps(self) -> float:
        return self.epsilon_255 / 255.0

    @property
    def step(self) -> float:
        return self.step_255 / 255.0

    @property
    def name(self) -> str:
        return f"{self.method}-{self.norm}-{self.epsilon_255:g}"

    def with_epsilon(self, epsilon_255: float) -> "AttackConfig":
        return replace(self, epsilon_255=epsilon_255)


@dataclass
class AttackResult:
    perturbed: np.ndarray
    success: np.ndarray | bool
    iterations_run: int


def rescale_l2(epsilon_ref: float, image_shape, reference_pixels: int = REFERENCE_PIXELS) -> float:
    """Map a whole-image L2 budget quoted for ~224x224 images onto a smaller image.

    Keeps per-pixel energy comparable: eps * sqrt(desk_pixels / reference_pixels),
    where pixel counts ignore the channel axis.
    """
    h, w = image_shape[0], image_shape[1]
    return float(epsilon_ref * math.sqrt(h * w / reference_pixels))


def project(delta, norm: str, eps: float) -> np.ndarray:
    """Project a single perturbation onto the eps-ball of the given norm."""
    delta = np.asarray(delta, dtype=np.float64)
    return _project_rows(delta.reshape(1, -1), norm, eps).reshape(delta.shape)


def _project_rows(d: np.ndarray, norm: str, eps: float) -> np.ndarray:
    if norm == "Linf":
        return np.clip(d, -eps, eps)
    norms = np.sqrt((d * d).sum(axis=1, keepdims=True))
    scale = np.ones_like(norms)
    over = norms > eps
    scale[over] = eps / norms[over]
    out = d * scale
    if eps == 0:
        out = np.zeros_like(d)
    return out


def _direction(g: np.ndarray, norm: str) -> np.ndarray:
    """Steepest-ascent direction per row: sign for Linf, unit L2 otherwise."""
    if norm == "Linf":
        return np.sign(g)
    n = np.sqrt((g * g).sum(axis=1, keepdims=True))
    out = np.zeros_like(g)
    nz = n[:, 0] > 0
    out[nz] = g[nz] / n[nz]
    return out


def _random_start(rng, shape, norm: str, eps: float) -> np.ndarray:
    if norm == "Linf":
        return rng.uniform(-eps, eps, size=shape)
    n, d = shape
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = eps * rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / d)
    return v * r


Callback = Callable[[int, np.ndarray], None]


def _prepare(net: TinyNet, X, y):
    X = np.asarray(X, dtype=np.float64)
    single = X.shape == net.arch.input_shape
    Xb = X[None] if single else X
    yb = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if len(yb) != len(Xb):
        raise ValueError("labels and inputs disagree in length")
    return Xb, yb, single


def _finish(net, X0, Xp, y, single, iters):
    clean_ok = tinynet.predict(net, X0) == y
    success = clean_ok & (tinynet.predict(net, Xp) != y)
    if single:
        return AttackResult(Xp[0], bool(success[0]), iters)
    return AttackResult(Xp, success, iters)


def pgd(net: TinyNet, X, y, cfg: AttackConfig, callback: Callback | None = None) -> AttackResult:
    """Projected gradient ascent on the cross-entropy of the true label.

    Each iterate is X + project(X_p - X + step * direction(grad)), clipped to [0, 1].
    """
    if cfg.method != "PGD":
        raise ValueError("pgd() needs a PGD config")
    Xb, yb, single = _prepare(net, X, y)
    n = len(Xb)
    flat0 = Xb.reshape(n, -1)
    delta = np.zeros_like(flat0)
    if cfg.random_start and cfg.eps > 0:
        rng = np.random.default_rng(cfg.seed)
        delta = _random_start(rng, flat0.shape, cfg.norm, cfg.eps)
        delta = np.clip(flat0 + delta, 0.0, 1.0) - flat0
    Xp = (flat0 + delta).reshape(Xb.shape)
    for t in range(cfg.steps):
        _, g = tinynet.loss_and_input_grad(net, Xp, yb)
        step = cfg.step * _direction(g.reshape(n, -1), cfg.norm)
        delta = _project_rows(Xp.reshape(n, -1) - flat0 + step, cfg.norm, cfg.eps)
        Xp = np.clip(flat0 + delta, 0.0, 1.0).reshape(Xb.shape)
        if callback is not None:
            callback(t, Xp)
    return _finish(net, Xb, Xp, yb, single, cfg.steps)


def mia(net: TinyNet, X, y, cfg: AttackConfig, callback: Callback | None = None) -> AttackResult:
    """Momentum iterative FGSM with L1-normalised gradient accumulation and step eps / T."""
    if cfg.method != "MIA":
        raise ValueError("mia() needs an MIA config")
    Xb, yb, single = _prepare(net, X, y)
    n = len(Xb)
    flat0 = Xb.reshape(n, -1)
    alpha = cfg.eps / cfg.steps
    g_acc = np.zeros_like(flat0)
    Xp = Xb.copy()
    if cfg.random_start and cfg.eps > 0:
        rng = np.random.default_rng(cfg.seed)
        d0 = _random_start(rng, flat0.shape, cfg.norm, cfg.eps)
        Xp = np.clip(flat0 + d0, 0.0, 1.0).reshape(Xb.shape)
    for t in range(cfg.steps):
        _, g = tinynet.loss_and_input_grad(net, Xp, yb)
        g = g.reshape(n, -1)
        l1 = np.abs(g).sum(axis=1, keepdims=True)
        contrib = np.divide(g, l1, out=np.zeros_like(g), where=l1 > 0)
        g_acc = cfg.decay * g_acc + contrib
        step = alpha * _direction(g_acc, cfg.norm)
        delta = _project_rows(Xp.reshape(n, -1) - flat0 + step, cfg.norm, cfg.eps)
        Xp = np.clip(flat0 + delta, 0.0, 1.0).reshape(Xb.shape)
        if callback is not None:
            callback(t, Xp)
    return _finish(net, Xb, Xp, yb, single, cfg.steps)


def run_attack(net: TinyNet, X, y, cfg: AttackConfig, callback: Callback | None = None) -> AttackResult:
    fn = pgd if cfg.method == "PGD" else mia
    return fn(net, X, y, cfg, callback)


def attack_batch(net: TinyNet, data, cfg: AttackConfig, batch_size: int = 256):
    """Attack every sample of a Dataset.

    Returns the attacked dataset (same ids, labels and truth features) and a
    boolean mask of samples that were classified correctly before the attack
    and misclassified after it.
    """
    if len(data) == 0:
        raise ValueError("cannot attack an empty dataset")
    out = np.empty_like(data.images)
    mask = np.zeros(len(data), dtype=bool)
    for b, start in enumerate(range(0, len(data), batch_size)):
        sl = slice(start, start + batch_size)
        sub_cfg = replace(cfg, seed=cfg.seed + b) if cfg.random_start else cfg
        res = run_attack(net, data.images[sl], data.labels[sl], sub_cfg)
        out[sl] = res.perturbed
        mask[sl] = res.success
    return data.with_images(out), mask

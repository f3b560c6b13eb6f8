"""Classifier training, PGD adversarial training and the epsilon line search."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tinynet
from .attacks import AttackConfig, attack_batch, pgd
from .dataset import Dataset
from .svg import bar_chart

DEFAULT_GRID = (1.0, 2.0, 4.0, 6.0, 8.0, 16.0)


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, ...] = (64, 32)
    epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 32


def classifier_arch(data: Dataset, hidden: Sequence[int]) -> tinynet.Architecture:
    """Softmax MLP over the dataset's images, standardised with the dataset's pixel statistics."""
    center, scale = tinynet.standardizer(data.images)
    return tinynet.mlp(data.image_shape, hidden, data.classes, "softmax", center, scale)


def train_classifier(data: Dataset, cfg: TrainConfig = TrainConfig(), seed: int = 0) -> tinynet.TinyNet:
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    net = tinynet.init(classifier_arch(data, cfg.hidden), seed)
    net, _ = tinynet.train(net, data.images, data.labels, cfg.epochs, cfg.lr, seed, cfg.batch_size)
    return net


def adv_train(
    net: tinynet.TinyNet,
    data: Dataset,
    inner: AttackConfig,
    epochs: int,
    lr: float,
    seed: int,
    batch_size: int = 32,
) -> tuple[tinynet.TinyNet, list[float]]:
    """Train on PGD-attacked mini-batches only (no clean mixing).

    Each batch is attacked against the current weights before its gradient
    step. With a zero inner epsilon the trajectory equals plain training.
    """
    if inner.method != "PGD":
        raise ValueError("adversarial training uses a PGD inner attack")
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    counter = [0]

    def hook(current, xb, yb):
        cfg = inner
        if inner.random_start:
            cfg = replace(inner, seed=inner.seed + seed * 1_000_003 + counter[0])
            counter[0] += 1
        return pgd(current, xb, yb, cfg).perturbed

    return tinynet.train(net, data.images, data.labels, epochs, lr, seed, batch_size, batch_hook=hook)


def train_adversarial(
    data: Dataset,
    inner: AttackConfig,
    cfg: TrainConfig = TrainConfig(epochs=30),
    seed: int = 0,
) -> tinynet.TinyNet:
    """Fresh classifier trained adversarially from the same initialisation as ``train_classifier``."""
    net = tinynet.init(classifier_arch(data, cfg.hidden), seed)
    net, _ = adv_train(net, data, inner, cfg.epochs, cfg.lr, seed, cfg.batch_size)
    return net


def robust_accuracy(net: tinynet.TinyNet, data: Dataset, attack: AttackConfig | None) -> float:
    """Accuracy on ``data`` after attacking every sample (clean accuracy when ``attack`` is None)."""
    if attack is None:
        return tinynet.accuracy(net, data.images, data.labels)
    attacked, _ = attack_batch(net, data, attack)
    return tinynet.accuracy(net, attacked.images, attacked.labels)


@dataclass(frozen=True)
class LineSearchReport:
    grid: tuple[float, ...]
    attacks: tuple[str, ...]
    per_epsilon: dict  # epsilon -> {attack name: accuracy}
    chosen: float

    def mean_accuracy(self, eps: float) -> float:
        row = self.per_epsilon[eps]
        return float(np.mean([row[a] for a in self.attacks]))


def choose_epsilon(per_epsilon: dict) -> float:
    """Epsilon with the highest mean accuracy over attacks; ties go to the smaller epsilon."""
    if not per_epsilon:
        raise ValueError("empty line search")
    best, best_score = None, -np.inf
    for eps in sorted(per_epsilon):
        score = float(np.mean(sorted(per_epsilon[eps].values())))
        if score > best_score:
            best, best_score = eps, score
    return best


def scaled_inner(inner: AttackConfig, eps: float) -> AttackConfig:
    """Inner attack at a new epsilon, keeping the step-to-epsilon ratio."""
    if inner.epsilon_255 <= 0 or eps <= 0:
        return inner.with_epsilon(eps)
    return replace(inner, epsilon_255=eps, step_255=inner.step_255 * eps / inner.epsilon_255)


def epsilon_line_search(
    train: Dataset,
    val: Dataset,
    grid: Sequence[float],
    eval_attacks: Sequence[AttackConfig],
    seed: int = 0,
    inner: AttackConfig = AttackConfig("PGD", "Linf", 4.0, steps=10, step_255=1.0),
    cfg: TrainConfig = TrainConfig(epochs=30),
    names: Sequence[str] | None = None,
) -> LineSearchReport:
    """Adversarially train one net per grid epsilon and score it on the validation set.

    ``names`` labels the eval attacks (defaults to each config's own name).
    """
    grid = tuple(float(e) for e in grid)
    if not grid:
        raise ValueError("epsilon grid is empty")
    if len(set(grid)) != len(grid):
        raise ValueError("epsilon grid has duplicates")
    names = tuple(names) if names is not None else tuple(a.name for a in eval_attacks)
    if len(names) != len(eval_attacks) or len(set(names)) != len(names):
        raise ValueError("eval attacks must be distinct")
    per_eps = {}
    for eps in grid:
        net = train_adversarial(train, scaled_inner(inner, eps), cfg, seed)
        per_eps[eps] = {n: robust_accuracy(net, val, a) for n, a in zip(names, eval_attacks)}
    return LineSearchReport(grid, names, per_eps, choose_epsilon(per_eps))


def write_line_search(report: LineSearchReport, out_dir) -> tuple[Path, Path]:
    """CSV (rows: epsilon, columns: attack vectors) plus a grouped bar chart."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, svg_path = out / "line_search.csv", out / "line_search.svg"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epsilon", *report.attacks, "mean", "chosen"])
        for eps in report.grid:
            row = report.per_epsilon[eps]
            w.writerow([f"{eps:g}", *(f"{row[a]:.6f}" for a in report.attacks),
                        f"{report.mean_accuracy(eps):.6f}", int(eps == report.chosen)])
    groups = list(report.attacks)
    series = [(f"eps={e:g}", [report.per_epsilon[e][a] for a in report.attacks]) for e in report.grid]
    svg_path.write_text(bar_chart("Adversarial-training epsilon line search", groups, series))
    return csv_path, svg_path

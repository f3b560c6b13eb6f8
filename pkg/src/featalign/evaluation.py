"""Detection ROC, defense accuracy and the defense-by-attack evaluation grid.

Detection is scored on a pool that is half benign and half successfully
attacked images, using the raw Jaccard distance. Defense accuracy is measured
on fully attacked test sets with the always-rectify pipeline.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import alignment, datagen, tinynet
from .advtrain import TrainConfig, train_adversarial, train_classifier
from .attacks import REFERENCE_PIXELS, AttackConfig, attack_batch, rescale_l2
from .dataset import Dataset
from .extractor import DEFAULT_CUTOFF, ExtractorNoise, OracleExtractor, mean_feature_f1, train_extractor
from .features import ClassFeatureMatrix, load_expanded
from .robust_stats import build_robust_dataset
from .svg import bar_chart, roc_chart

DEFENSES = ("None", "AT", "UnMask")


@dataclass(frozen=True)
class RocCurve:
    points: tuple[tuple[float, float, float], ...]  # (threshold, tpr, fpr), threshold ascending
    auc: float

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def tpr(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    @property
    def fpr(self) -> np.ndarray:
        return np.array([p[2] for p in self.points])


def _split_scores(scores) -> tuple[np.ndarray, np.ndarray]:
    d = np.array([float(s) for s, _ in scores], dtype=np.float64)
    adv = np.array([bool(a) for _, a in scores], dtype=bool)
    if not np.isfinite(d).all():
        raise ValueError("distances must be finite")
    if adv.all() or not adv.any():
        raise ValueError("ROC needs both adversarial and benign samples")
    return d[adv], d[~adv]


def roc(scores: Sequence[tuple[float, bool]]) -> RocCurve:
    """Exact empirical ROC for the rule d >= t -> adversarial.

    Thresholds are 0, every distinct observed distance and one value just above
    max(1, largest distance), so the curve starts at (1, 1) and ends at (0, 0).
    """
    pos, neg = _split_scores(scores)
    pos_sorted, neg_sorted = np.sort(pos), np.sort(neg)
    top = np.nextafter(max(1.0, float(max(pos.max(), neg.max()))), np.inf)
    ts = np.unique(np.concatenate([[min(0.0, pos.min(), neg.min())], pos, neg, [top]]))
    # fraction of scores >= t
    tpr = 1.0 - np.searchsorted(pos_sorted, ts, side="left") / len(pos)
    fpr = 1.0 - np.searchsorted(neg_sorted, ts, side="left") / len(neg)
    auc = float(np.sum((fpr[:-1] - fpr[1:]) * (tpr[:-1] + tpr[1:]) / 2.0))
    pts = tuple((float(t), float(a), float(b)) for t, a, b in zip(ts, tpr, fpr))
    return RocCurve(pts, auc)


def wilcoxon_auc(scores: Sequence[tuple[float, bool]]) -> float:
    """P(d_adv > d_benign) + P(d_adv == d_benign) / 2 over all pairs."""
    pos, neg = _split_scores(scores)
    neg = np.sort(neg)
    below = np.searchsorted(neg, pos, side="left")
    ties = np.searchsorted(neg, pos, side="right") - below
    return float((below.sum() + 0.5 * ties.sum()) / (len(pos) * len(neg)))


def balanced_pools(n_benign: int, n_adv: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices giving equal-size benign and adversarial pools; the larger side is subsampled."""
    if n_benign == 0 or n_adv == 0:
        raise ValueError("detection needs non-empty benign and adversarial pools")
    k = min(n_benign, n_adv)
    rng = np.random.default_rng([seed, 0x50])
    pick = lambda n: np.arange(n) if n == k else np.sort(rng.choice(n, size=k, replace=False))
    return pick(n_benign), pick(n_adv)


def distances(model, extractor, matrix, classes, data: Dataset, cutoff: float = DEFAULT_CUTOFF) -> np.ndarray:
    outs = alignment.pipeline_batch(data, model, extractor, matrix, classes, 0.5, "detect_then_rectify", cutoff)
    return np.array([o.detection.distance for o in outs])


def detection_eval(
    model,
    extractor,
    matrix: ClassFeatureMatrix,
    classes,
    benign: Dataset,
    attacked: Dataset,
    cutoff: float = DEFAULT_CUTOFF,
    seed: int = 0,
) -> tuple[RocCurve, list[tuple[float, bool]]]:
    """ROC at contamination 0.5; ``attacked`` should hold only successful attacks."""
    ib, ia = balanced_pools(len(benign), len(attacked), seed)
    db = distances(model, extractor, matrix, classes, benign.subset(ib), cutoff)
    da = distances(model, extractor, matrix, classes, attacked.subset(ia), cutoff)
    scores = [(float(d), False) for d in db] + [(float(d), True) for d in da]
    return roc(scores), scores


def defense_eval(
    model,
    extractor,
    matrix: ClassFeatureMatrix,
    classes,
    attacked: Dataset,
    mode: str = "always_rectify",
    t: float = 0.5,
    cutoff: float = DEFAULT_CUTOFF,
) -> float:
    """Fraction of samples whose pipeline output equals the true label."""
    if len(attacked) == 0:
        raise ValueError("defense evaluation needs samples")
    outs = alignment.pipeline_batch(attacked, model, extractor, matrix, classes, t, mode, cutoff)
    return float(np.mean([o.predicted_class == s.label for o, s in zip(outs, attacked)]))


@dataclass(frozen=True)
class AttackVector:
    method: str
    norm: str
    epsilon: float  # 0-255 units for Linf, whole-image budget at the reference size for L2

    @property
    def name(self) -> str:
        return f"{self.method}-{self.norm}-{self.epsilon:g}"

    def config(self, image_shape, steps: int = 20, step_255: float = 2.0, decay: float = 1.0,
               reference_pixels: int = REFERENCE_PIXELS) -> AttackConfig:
        eps = self.epsilon if self.norm == "Linf" else rescale_l2(self.epsilon, image_shape, reference_pixels)
        step = step_255 if self.norm == "Linf" else eps / steps * 2.5
        return AttackConfig(self.method, self.norm, eps, steps, step, decay)


DEFAULT_VECTORS = tuple(
    AttackVector(m, n, e)
    for m in ("PGD", "MIA")
    for n, es in (("Linf", (8.0, 16.0)), ("L2", (300.0, 600.0)))
    for e in es
)


@dataclass(frozen=True)
class GridSettings:
    class_sets: tuple[str, ...] = ("CS3a", "CS3b", "CS5a", "CS5b")
    seeds: tuple[int, ...] = (0,)
    per_class: int = 500
    drop_p: float = 0.2
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    vectors: tuple[AttackVector, ...] = DEFAULT_VECTORS
    steps: int = 20
    step_255: float = 2.0
    decay: float = 1.0
    classifier: TrainConfig = TrainConfig()
    adversarial: TrainConfig = TrainConfig(epochs=30)
    at_epsilon: float = 4.0
    at_steps: int = 10
    at_step_255: float = 1.0
    extractor: str = "trained"  # or "oracle"
    extractor_hidden: tuple[int, ...] = (64,)
    extractor_epochs: int = 20
    extractor_lr: float = 0.01
    oracle_noise: ExtractorNoise = ExtractorNoise()
    cutoff: float = DEFAULT_CUTOFF
    mode: str = "always_rectify"
    matrix_path: str | None = None
    layout: dict = field(default_factory=dict)  # overrides for datagen.feature_layout

    def inner_attack(self) -> AttackConfig:
        return AttackConfig("PGD", "Linf", self.at_epsilon, self.at_steps, self.at_step_255)


@dataclass
class EvalReport:
    accuracy: dict  # (defense, column, class set) -> accuracy; column "none" is no attack
    detection: dict  # (vector name, class set) -> RocCurve
    metadata: dict

    def columns(self) -> list[str]:
        seen = []
        for _, col, _ in self.accuracy:
            if col not in seen:
                seen.append(col)
        return seen

    def class_sets(self) -> list[str]:
        seen = []
        for _, _, cs in self.accuracy:
            if cs not in seen:
                seen.append(cs)
        return seen


@dataclass
class CellResult:
    class_set: str
    seed: int
    accuracy: dict  # (defense, column) -> accuracy
    scores: dict  # vector name -> list of (distance, is_adv)
    extractor_f1: float
    l2_epsilons: dict


def build_extractor(settings: GridSettings, train: Dataset, layout, seed: int):
    if settings.extractor == "oracle":
        return OracleExtractor(train.features, settings.oracle_noise, seed)
    if settings.extractor != "trained":
        raise ValueError(f"unknown extractor kind {settings.extractor!r}")
    robust = build_robust_dataset(train, layout.features, layout, seed)
    return train_extractor(robust, settings.extractor_hidden, settings.extractor_epochs, settings.extractor_lr, seed)


def run_cell(settings: GridSettings, class_set: str, seed: int) -> CellResult:
    """Train M, the adversarially trained net and K for one class set and seed, then attack."""
    matrix = load_expanded(settings.matrix_path)
    cs = matrix.class_set(class_set)
    layout = datagen.feature_layout(matrix, cs, seed, **settings.layout)
    train, _, test = datagen.generate_dataset(
        matrix, cs, settings.per_class, settings.drop_p, seed, settings.split, layout
    )
    model = train_classifier(train, settings.classifier, seed)
    at_net = train_adversarial(train, settings.inner_attack(), settings.adversarial, seed)
    ext = build_extractor(settings, train, layout, seed)

    acc = {
        ("None", "none"): tinynet.accuracy(model, test.images, test.labels),
        ("AT", "none"): tinynet.accuracy(at_net, test.images, test.labels),
        ("UnMask", "none"): defense_eval(model, ext, matrix, cs, test, settings.mode, cutoff=settings.cutoff),
    }
    scores, l2 = {}, {}
    for v in settings.vectors:
        cfg = v.config(test.image_shape, settings.steps, settings.step_255, settings.decay)
        if v.norm == "L2":
            l2[v.name] = cfg.epsilon_255
        adv, mask = attack_batch(model, test, cfg)
        acc[("None", v.name)] = tinynet.accuracy(model, adv.images, adv.labels)
        acc[("UnMask", v.name)] = defense_eval(model, ext, matrix, cs, adv, settings.mode, cutoff=settings.cutoff)
        adv_at, _ = attack_batch(at_net, test, cfg)
        acc[("AT", v.name)] = tinynet.accuracy(at_net, adv_at.images, adv_at.labels)
        if mask.any():
            _, sc = detection_eval(model, ext, matrix, cs, test, adv.subset(mask), settings.cutoff, seed)
            scores[v.name] = sc
    f1 = mean_feature_f1(ext, test, settings.cutoff)
    return CellResult(class_set, seed, acc, scores, f1, l2)


def _run_cell_args(args):
    return run_cell(*args)


def attack_grid(settings: GridSettings, jobs: int = 1) -> EvalReport:
    """Evaluate None / AT / UnMask on every attack vector and class set.

    Accuracies are averaged over seeds; detection scores are pooled over
    seeds. Results are reduced in a fixed order, so ``jobs`` never changes
    the report.
    """
    if not settings.class_sets or not settings.seeds:
        raise ValueError("grid needs at least one class set and one seed")
    tasks = [(settings, cs, s) for cs in settings.class_sets for s in settings.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell_args, tasks))
    else:
        cells = [run_cell(*t) for t in tasks]

    columns = ["none", *(v.name for v in settings.vectors)]
    accuracy, detection = {}, {}
    f1s, l2_eps = {}, {}
    for cs in settings.class_sets:
        mine = [c for c in cells if c.class_set == cs]
        for d in DEFENSES:
            for col in columns:
                accuracy[(d, col, cs)] = float(np.mean([c.accuracy[(d, col)] for c in mine]))
        for v in settings.vectors:
            pooled = [p for c in mine for p in c.scores.get(v.name, [])]
            if any(a for _, a in pooled) and not all(a for _, a in pooled):
                detection[(v.name, cs)] = roc(pooled)
        f1s[cs] = float(np.mean([c.extractor_f1 for c in mine]))
        l2_eps.update(mine[0].l2_epsilons)
    meta = {
        "settings": settings_to_dict(settings),
        "extractor_f1": f1s,
        "l2_epsilon_255_rescaled": l2_eps,
        "mode": settings.mode,
    }
    return EvalReport(accuracy, detection, meta)


def settings_to_dict(settings: GridSettings) -> dict:
    d = asdict(settings)
    d["vectors"] = [asdict(v) for v in settings.vectors]
    return d


def _fmt_eps(x: float) -> str:
    return f"{x:g}"


def emit_report(report: EvalReport, out_dir) -> list[Path]:
    """Write grid.csv, one roc_<set>.svg per class set, summary.svg and grid_meta.json."""
    if not report.accuracy:
        raise ValueError("report is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    vectors = {v["method"] + "-" + v["norm"] + "-" + _fmt_eps(v["epsilon"]): v
               for v in report.metadata.get("settings", {}).get("vectors", [])}

    path = out / "grid.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["defense", "attack", "norm", "epsilon", "class_set", "accuracy"])
        for (d, col, cs), a in report.accuracy.items():
            if col == "none":
                method, norm, eps = "none", "none", "0"
            elif col in vectors:
                v = vectors[col]
                method, norm, eps = v["method"], v["norm"], _fmt_eps(v["epsilon"])
            else:
                method, norm, eps = col.split("-", 2)
            w.writerow([d, method, norm, eps, cs, f"{a:.6f}"])
    written.append(path)

    for cs in report.class_sets():
        curves = [(f"{name} (AUC {curve.auc:.3f})", [(p[2], p[1]) for p in curve.points])
                  for (name, c), curve in report.detection.items() if c == cs]
        path = out / f"roc_{cs}.svg"
        path.write_text(roc_chart(f"Detection ROC, {cs}", curves))
        written.append(path)

    cols = report.columns()
    sets = report.class_sets()
    series = [(d, [float(np.mean([report.accuracy[(d, c, s)] for s in sets])) for c in cols]) for d in DEFENSES]
    path = out / "summary.svg"
    path.write_text(bar_chart("Accuracy by defense and attack (mean over class sets)", cols, series))
    written.append(path)

    meta = dict(report.metadata)
    meta["auc"] = {f"{name}|{cs}": round(c.auc, 6) for (name, cs), c in report.detection.items()}
    path = out / "grid_meta.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    written.append(path)
    return written


def report_to_dict(report: EvalReport) -> dict:
    return {
        "accuracy": [[d, col, cs, a] for (d, col, cs), a in report.accuracy.items()],
        "detection": [[name, cs, [list(p) for p in c.points], c.auc] for (name, cs), c in report.detection.items()],
        "metadata": report.metadata,
    }


def report_from_dict(d: dict) -> EvalReport:
    try:
        acc = {(r[0], r[1], r[2]): float(r[3]) for r in d["accuracy"]}
        det = {(r[0], r[1]): RocCurve(tuple(tuple(float(x) for x in p) for p in r[2]), float(r[3]))
               for r in d["detection"]}
        return EvalReport(acc, det, dict(d.get("metadata", {})))
    except (KeyError, IndexError, TypeError) as exc:
        raise ValueError(f"malformed report: {exc}") from None


def save_report(report: EvalReport, path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), sort_keys=True, default=str) + "\n")


def load_report(path) -> EvalReport:
    return report_from_dict(json.loads(Path(path).read_text()))

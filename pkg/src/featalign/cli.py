"""``featalign`` command-line driver.

Usage: featalign <subcommand> [--config FILE] [--out DIR] [--jobs N] [--section.key=value ...]

Artifacts go under <out>/data, <out>/models, <out>/attacks and <out>/reports;
every run also writes <out>/run.meta with the effective configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, advtrain, alignment, attacks, config, datagen, evaluation, extractor, ingest, svg, tinynet
from .robust_stats import build_robust_dataset

SUBCOMMANDS = (
    "gen-data", "train", "train-extractor", "attack", "adv-train",
    "sweep-epsilon", "detect", "defend", "grid", "report",
)
EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class Run:
    """Resolved config plus helpers shared by the subcommands."""

    def __init__(self, cfg: dict, out: Path, jobs: int):
        self.cfg = cfg
        self.out = out
        self.jobs = jobs
        self.matrix = config.matrix_for(cfg)
        config.validate(cfg, self.matrix)
        self.seed = int(cfg["experiment"]["seed"])
        self.cs = self.matrix.class_set(cfg["experiment"]["class_set"])

    def dir(self, name: str) -> Path:
        p = self.out / name
        p.mkdir(parents=True, exist_ok=True)
        return p

    def layout(self):
        return datagen.feature_layout(self.matrix, self.cs, self.seed, **config.layout_kwargs(self.cfg))

    def split(self, name: str):
        path = self.out / "data" / name
        if not (path / ingest.MANIFEST).exists():
            raise FileNotFoundError(f"{path}: run gen-data first")
        return ingest.load_dataset(path, self.matrix.vocab.atomic)

    def model(self, name: str = "model") -> tinynet.TinyNet:
        path = self.out / "models" / f"{name}.tnet"
        if not path.exists():
            raise FileNotFoundError(f"{path}: train the model first")
        return tinynet.load(path)

    def target_model(self) -> tinynet.TinyNet:
        return self.model("model" if self.cfg["attack"]["target"] == "model" else "adv")

    def attack_name(self) -> str:
        a = config.attack_config(self.cfg)
        return f"{a.name}-{self.cfg['attack']['target']}"

    def extractor(self, test):
        x = self.cfg["extractor"]
        if x["kind"] == "oracle":
            return extractor.OracleExtractor(test.features, extractor.ExtractorNoise(x["p_miss"], x["p_spur"]), self.seed)
        if x["kind"] == "file":
            if not x["path"]:
                raise ValueError("extractor.path is required for kind = 'file'")
            return extractor.FileExtractor.from_file(x["path"])
        return extractor.NetExtractor(self.model("extractor"))

    def attacked(self):
        path = self.out / "attacks" / self.attack_name()
        if not (path / ingest.MANIFEST).exists():
            raise FileNotFoundError(f"{path}: run attack first")
        data = ingest.load_dataset(path, self.matrix.vocab.atomic)
        mask = np.array(json.loads((path / "success.json").read_text())["success"], dtype=bool)
        return data, mask


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_gen_data(run: Run) -> None:
    d = run.cfg["data"]
    splits = datagen.generate_dataset(run.matrix, run.cs, int(d["per_class"]), float(d["drop_p"]), run.seed,
                                      tuple(d["split"]), run.layout())
    for name, data in zip(("train", "val", "test"), splits):
        ingest.save_dataset(data, run.dir("data") / name, run.matrix.vocab.atomic)
        print(f"{name}: {len(data)} samples")


def cmd_train(run: Run) -> None:
    train, test = run.split("train"), run.split("test")
    net = advtrain.train_classifier(train, config.train_config(run.cfg["model"]), run.seed)
    tinynet.save(net, run.dir("models") / "model.tnet")
    acc = tinynet.accuracy(net, test.images, test.labels)
    _write_json(run.dir("reports") / "train.json", {"test_accuracy": acc})
    print(f"test accuracy {acc:.4f}")


def cmd_train_extractor(run: Run) -> None:
    x = run.cfg["extractor"]
    train, test = run.split("train"), run.split("test")
    robust = build_robust_dataset(train, train.features, run.layout(), run.seed)
    ext = extractor.train_extractor(robust, tuple(x["hidden"]), int(x["epochs"]), float(x["lr"]), run.seed)
    tinynet.save(ext.net, run.dir("models") / "extractor.tnet")
    f1 = extractor.mean_feature_f1(ext, test, float(x["cutoff"]))
    extractor.export_detections(ext, test, run.dir("reports") / "test_detections.jsonl")
    _write_json(run.dir("reports") / "extractor.json", {"mean_feature_f1": f1})
    print(f"extractor mean per-feature F1 {f1:.4f}")


def cmd_adv_train(run: Run) -> None:
    a = run.cfg["advtrain"]
    train, test = run.split("train"), run.split("test")
    cfg = advtrain.TrainConfig(tuple(run.cfg["model"]["hidden"]), int(a["epochs"]), float(a["lr"]),
                               int(run.cfg["model"]["batch_size"]))
    net = advtrain.train_adversarial(train, config.inner_attack(run.cfg), cfg, run.seed)
    tinynet.save(net, run.dir("models") / "adv.tnet")
    acc = tinynet.accuracy(net, test.images, test.labels)
    _write_json(run.dir("reports") / "adv_train.json", {"test_accuracy": acc})
    print(f"adversarially trained test accuracy {acc:.4f}")


def cmd_attack(run: Run) -> None:
    test = run.split("test")
    net = run.target_model()
    cfg = config.attack_config(run.cfg)
    adv, mask = attacks.attack_batch(net, test, cfg)
    path = run.dir("attacks") / run.attack_name()
    ingest.save_dataset(adv, path, run.matrix.vocab.atomic, allow_rounding=True)
    _write_json(path / "success.json", {"ids": list(adv.ids), "success": [bool(m) for m in mask]})
    acc = tinynet.accuracy(net, adv.images, adv.labels)
    print(f"{run.attack_name()}: success rate {mask.mean():.4f}, accuracy under attack {acc:.4f}")


def cmd_sweep_epsilon(run: Run) -> None:
    train, val = run.split("train"), run.split("val")
    a = run.cfg["advtrain"]
    vectors = config.grid_settings(run.cfg).vectors
    evals = [v.config(val.image_shape, int(run.cfg["attack"]["steps"]), float(run.cfg["attack"]["step"]),
                        float(run.cfg["attack"]["decay"])) for v in vectors]
    cfg = advtrain.TrainConfig(tuple(run.cfg["model"]["hidden"]), int(a["epochs"]), float(a["lr"]),
                               int(run.cfg["model"]["batch_size"]))
    report = advtrain.epsilon_line_search(train, val, a["grid"], evals, run.seed, config.inner_attack(run.cfg), cfg,
                                          [v.name for v in vectors])
    advtrain.write_line_search(report, run.dir("reports"))
    print(f"chosen epsilon {report.chosen:g}")


def cmd_detect(run: Run) -> None:
    test = run.split("test")
    adv, mask = run.attacked()
    if not mask.any():
        raise RuntimeError("no successful attacks to score")
    model = run.target_model()
    ext = run.extractor(test)
    cutoff = float(run.cfg["extractor"]["cutoff"])
    curve, _ = evaluation.detection_eval(model, ext, run.matrix, run.cs, test, adv.subset(mask), cutoff, run.seed)
    name = run.attack_name()
    rep = run.dir("reports")
    with open(rep / f"detection_{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "tpr", "fpr"])
        for t, tp, fp in curve.points:
            w.writerow([f"{t:.6f}", f"{tp:.6f}", f"{fp:.6f}"])
    chart = svg.roc_chart(f"Detection ROC, {run.cs.name}",
                          [(f"{name} (AUC {curve.auc:.3f})", [(p[2], p[1]) for p in curve.points])])
    (rep / f"detection_{name}.svg").write_text(chart)
    print(f"detection AUC {curve.auc:.4f}")


def cmd_defend(run: Run) -> None:
    test = run.split("test")
    adv, _ = run.attacked()
    model = run.target_model()
    ext = run.extractor(test)
    d = run.cfg["defense"]
    cutoff = float(run.cfg["extractor"]["cutoff"])
    acc = evaluation.defense_eval(model, ext, run.matrix, run.cs, adv, d["mode"], float(d["threshold"]), cutoff)
    outs = alignment.pipeline_batch(adv, model, ext, run.matrix, run.cs, float(d["threshold"]), d["mode"], cutoff)
    name = run.attack_name()
    with open(run.dir("reports") / f"defense_{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", "model_class", "predicted_class", "distance", "flagged"])
        for s, o in zip(adv, outs):
            w.writerow([s.id, s.label, o.model_class, o.predicted_class, f"{o.detection.distance:.6f}", int(o.rectified)])
    _write_json(run.dir("reports") / f"defense_{name}.json", {"accuracy": acc, "mode": d["mode"]})
    print(f"defense accuracy {acc:.4f} ({d['mode']})")


def cmd_grid(run: Run) -> None:
    report = evaluation.attack_grid(config.grid_settings(run.cfg), jobs=run.jobs)
    rep = run.dir("reports")
    evaluation.save_report(report, rep / "grid_report.json")
    for p in evaluation.emit_report(report, rep):
        print(p)


def cmd_report(run: Run) -> None:
    path = run.out / "reports" / "grid_report.json"
    if not path.exists():
        raise FileNotFoundError(f"{path}: run grid first")
    for p in evaluation.emit_report(evaluation.load_report(path), run.dir("reports")):
        print(p)


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "train-extractor": cmd_train_extractor,
    "attack": cmd_attack,
    "adv-train": cmd_adv_train,
    "sweep-epsilon": cmd_sweep_epsilon,
    "detect": cmd_detect,
    "defend": cmd_defend,
    "grid": cmd_grid,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="featalign", description="Feature-alignment adversarial defense experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="TOML experiment config (defaults to the bundled reference config)")
    p.add_argument("--out", default="runs/default", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for the grid")
    return p


def split_overrides(extra: list[str]) -> dict:
    out = {}
    for arg in extra:
        if not arg.startswith("--") or "=" not in arg:
            raise config.ConfigError(f"unrecognised argument {arg!r}; overrides look like --section.key=value")
        key, value = arg[2:].split("=", 1)
        out[key] = value
    return out


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        if args.jobs < 1:
            raise config.ConfigError("--jobs must be >= 1")
        cfg = config.load_config(args.config, split_overrides(extra))
        run = Run(cfg, Path(args.out), args.jobs)
    except config.ConfigError as exc:
        print(f"featalign: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        run.out.mkdir(parents=True, exist_ok=True)
        meta = {"subcommand": args.subcommand, "config": cfg, "version": __version__}
        _write_json(run.out / "run.meta", meta)
        COMMANDS[args.subcommand](run)
    except Exception as exc:  # runtime failures map to exit 1
        print(f"featalign {args.subcommand}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

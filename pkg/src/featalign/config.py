"""Experiment configuration: bundled defaults, TOML files and dotted overrides."""

from __future__ import annotations

import copy
from importlib import resources
from pathlib import Path

import tomli

from .advtrain import TrainConfig
from .attacks import AttackConfig
from .evaluation import AttackVector, GridSettings
from .extractor import ExtractorNoise
from .features import ClassFeatureMatrix, load_expanded


class ConfigError(ValueError):
    pass


def bundled_config_text() -> str:
    return resources.files("featalign.data").joinpath("reference.toml").read_text()


def default_config() -> dict:
    return tomli.loads(bundled_config_text())


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_value(text: str):
    """TOML scalar/array syntax when it parses, otherwise the raw string."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_override(cfg: dict, dotted: str, text: str) -> None:
    parts = dotted.split(".")
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"override {dotted!r} must look like section.key")
    section, key = parts
    if section not in cfg or not isinstance(cfg[section], dict):
        raise ConfigError(f"unknown config section {section!r}")
    if key not in cfg[section]:
        raise ConfigError(f"unknown config key {dotted!r}")
    cfg[section][key] = parse_value(text)


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Bundled defaults, then the file at ``path``, then ``overrides`` (dotted key -> text)."""
    cfg = default_config()
    if path is not None:
        try:
            user = tomli.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"{path}: no such config file") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        unknown = [f"{s}.{k}" for s, sec in user.items() if isinstance(sec, dict)
                   for k in sec if s not in cfg or k not in cfg[s]]
        unknown += [s for s, sec in user.items() if not isinstance(sec, dict) or s not in cfg]
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(set(unknown))}")
        cfg = _merge(cfg, user)
    for k, v in (overrides or {}).items():
        apply_override(cfg, k, v)
    return cfg


def matrix_for(cfg: dict) -> ClassFeatureMatrix:
    path = cfg["experiment"]["matrix"] or None
    try:
        return load_expanded(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load matrix: {exc}") from None


def validate(cfg: dict, matrix: ClassFeatureMatrix) -> None:
    exp = cfg["experiment"]
    for name in [exp["class_set"], *exp["class_sets"]]:
        try:
            matrix.class_set(name)
        except KeyError:
            raise ConfigError(f"class set {name!r} is not defined by the matrix") from None
    if cfg["extractor"]["kind"] not in ("trained", "oracle", "file"):
        raise ConfigError(f"unknown extractor kind {cfg['extractor']['kind']!r}")
    if cfg["attack"]["target"] not in ("model", "adv"):
        raise ConfigError("attack.target must be 'model' or 'adv'")
    try:
        attack_config(cfg)
        grid_settings(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def layout_kwargs(cfg: dict) -> dict:
    d = cfg["data"]
    keys = ("height", "width", "channels", "patch", "sigma", "contrast", "texture_amp", "min_visibility")
    return {k: d[k] for k in keys}


def train_config(section: dict) -> TrainConfig:
    return TrainConfig(tuple(section.get("hidden", (64, 32))), int(section["epochs"]), float(section["lr"]),
                       int(section.get("batch_size", 32)))


def attack_config(cfg: dict) -> AttackConfig:
    a = cfg["attack"]
    return AttackConfig(a["method"], a["norm"], float(a["epsilon"]), int(a["steps"]), float(a["step"]),
                        float(a["decay"]), bool(a["random_start"]), int(cfg["experiment"]["seed"]))


def inner_attack(cfg: dict) -> AttackConfig:
    a = cfg["advtrain"]
    return AttackConfig("PGD", "Linf", float(a["epsilon"]), int(a["steps"]), float(a["step"]))


def grid_settings(cfg: dict) -> GridSettings:
    g, x, d = cfg["grid"], cfg["extractor"], cfg["data"]
    vectors = tuple(
        AttackVector(m, n, float(e))
        for m in g["methods"]
        for n, es in (("Linf", g["linf_epsilons"]), ("L2", g["l2_epsilons"]))
        for e in es
    )
    adv = cfg["advtrain"]
    return GridSettings(
        class_sets=tuple(cfg["experiment"]["class_sets"]),
        seeds=tuple(int(s) for s in cfg["experiment"]["seeds"]),
        per_class=int(d["per_class"]),
        drop_p=float(d["drop_p"]),
        split=tuple(float(f) for f in d["split"]),
        vectors=vectors,
        steps=int(cfg["attack"]["steps"]),
        step_255=float(cfg["attack"]["step"]),
        decay=float(cfg["attack"]["decay"]),
        classifier=train_config(cfg["model"]),
        adversarial=TrainConfig(tuple(cfg["model"]["hidden"]), int(adv["epochs"]), float(adv["lr"]),
                                int(cfg["model"]["batch_size"])),
        at_epsilon=float(adv["epsilon"]),
        at_steps=int(adv["steps"]),
        at_step_255=float(adv["step"]),
        extractor="oracle" if x["kind"] == "oracle" else "trained",
        extractor_hidden=tuple(x["hidden"]),
        extractor_epochs=int(x["epochs"]),
        extractor_lr=float(x["lr"]),
        oracle_noise=ExtractorNoise(float(x["p_miss"]), float(x["p_spur"])),
        cutoff=float(x["cutoff"]),
        mode=cfg["defense"]["mode"],
        matrix_path=cfg["experiment"]["matrix"] or None,
        layout=layout_kwargs(cfg),
    )

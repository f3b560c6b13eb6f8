import json
import subprocess
import sys

import pytest

from featalign import config
from featalign.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main

FAST = [
    "--data.per_class=20", "--model.epochs=2", "--advtrain.epochs=1", "--advtrain.steps=2",
    "--extractor.epochs=3", "--attack.steps=3", "--advtrain.grid=[0.0, 4.0]",
    "--experiment.class_sets=[\"CS3a\"]", "--grid.linf_epsilons=[8.0]", "--grid.l2_epsilons=[300.0]",
]


def run(tmp_path, *args):
    return main([args[0], "--out", str(tmp_path), *FAST, *args[1:]])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    for cmd in ("gen-data", "train", "train-extractor", "adv-train", "attack"):
        assert run(out, cmd) == EXIT_OK, cmd
    return out


def test_artifact_layout(pipeline):
    for rel in ("data/train/manifest.json", "data/test/images.f32", "models/model.tnet",
                "models/extractor.tnet", "models/adv.tnet", "attacks/PGD-Linf-8-model/success.json"):
        assert (pipeline / rel).exists(), rel
    meta = json.loads((pipeline / "run.meta").read_text())
    assert meta["subcommand"] == "attack" and meta["config"]["data"]["per_class"] == 20


def test_detect_and_defend(pipeline, capsys):
    assert run(pipeline, "detect") == EXIT_OK
    assert run(pipeline, "defend") == EXIT_OK
    assert "defense accuracy" in capsys.readouterr().out
    assert (pipeline / "reports" / "detection_PGD-Linf-8-model.csv").exists()
    assert (pipeline / "reports" / "defense_PGD-Linf-8-model.json").exists()


def test_oracle_and_file_extractors(pipeline, tmp_path):
    assert run(pipeline, "defend", "--extractor.kind=oracle", "--extractor.p_miss=0.0", "--extractor.p_spur=0.0") == EXIT_OK
    acc = json.loads((pipeline / "reports" / "defense_PGD-Linf-8-model.json").read_text())["accuracy"]
    assert acc == 1.0
    assert run(pipeline, "defend", "--extractor.kind=file") == EXIT_RUNTIME


def test_sweep_epsilon(pipeline):
    assert run(pipeline, "sweep-epsilon") == EXIT_OK
    lines = (pipeline / "reports" / "line_search.csv").read_text().splitlines()
    assert lines[0].startswith("epsilon,PGD-Linf-8,PGD-L2-300,MIA-Linf-8,MIA-L2-300")
    assert len(lines) == 3


def test_grid_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "grid") == EXIT_OK
    assert run(b, "grid") == EXIT_OK
    for name in ("grid.csv", "summary.svg", "roc_CS3a.svg"):
        assert (a / "reports" / name).read_bytes() == (b / "reports" / name).read_bytes()
    (a / "reports" / "grid.csv").unlink()
    assert run(a, "report") == EXIT_OK
    assert (a / "reports" / "grid.csv").read_bytes() == (b / "reports" / "grid.csv").read_bytes()


def test_usage_errors(tmp_path, capsys):
    assert main(["frobnicate"]) == EXIT_USAGE
    assert run(tmp_path, "train", "--model.nope=1") == EXIT_USAGE
    assert run(tmp_path, "train", "--experiment.class_set=CS9") == EXIT_USAGE
    assert run(tmp_path, "train", "stray") == EXIT_USAGE
    assert main(["train", "--config", str(tmp_path / "missing.toml")]) == EXIT_USAGE
    assert main(["grid", "--jobs", "0"]) == EXIT_USAGE
    assert "config error" in capsys.readouterr().err


def test_runtime_error_when_inputs_missing(tmp_path):
    assert run(tmp_path, "train") == EXIT_RUNTIME
    assert run(tmp_path, "report") == EXIT_RUNTIME


def test_config_file_and_unknown_keys(tmp_path):
    good = tmp_path / "c.toml"
    good.write_text("[data]\nper_class = 7\n")
    assert config.load_config(good)["data"]["per_class"] == 7
    bad = tmp_path / "b.toml"
    bad.write_text("[data]\nper_clas = 7\n")
    with pytest.raises(config.ConfigError):
        config.load_config(bad)
    cfg = config.load_config(None, {"attack.norm": "L2", "data.split": "[0.5, 0.25, 0.25]"})
    assert cfg["attack"]["norm"] == "L2" and cfg["data"]["split"] == [0.5, 0.25, 0.25]


def test_console_script_version():
    out = subprocess.run([sys.executable, "-m", "featalign.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "featalign" in out.stdout

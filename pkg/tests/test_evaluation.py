import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from featalign import evaluation
from featalign.evaluation import (
    AttackVector,
    EvalReport,
    GridSettings,
    RocCurve,
    attack_grid,
    balanced_pools,
    defense_eval,
    detection_eval,
    emit_report,
    load_report,
    roc,
    save_report,
    wilcoxon_auc,
)
from featalign.extractor import ExtractorNoise, OracleExtractor
from featalign.attacks import AttackConfig, attack_batch

# AUC of two independent draws rounded to 0.01 (tests/oracles/derive_values.py)
IDENTICAL_AUC = 0.50484


def check_curve(curve: RocCurve):
    t, tpr, fpr = curve.thresholds, curve.tpr, curve.fpr
    assert np.all(np.diff(t) > 0)
    assert (tpr[0], fpr[0]) == (1.0, 1.0)
    assert (tpr[-1], fpr[-1]) == (0.0, 0.0)
    assert np.all(np.diff(tpr) <= 0) and np.all(np.diff(fpr) <= 0)
    assert 0.0 <= curve.auc <= 1.0


scores_st = st.lists(st.tuples(st.floats(0, 1).map(lambda x: round(x, 2)), st.booleans()), min_size=2, max_size=80)


@settings(max_examples=200)
@given(scores_st)
def test_roc_invariants_and_wilcoxon(scores):
    if all(a for _, a in scores) or not any(a for _, a in scores):
        with pytest.raises(ValueError):
            roc(scores)
        return
    curve = roc(scores)
    check_curve(curve)
    assert abs(curve.auc - wilcoxon_auc(scores)) <= 1e-9


def test_identical_distributions():
    rng = np.random.default_rng(3)
    pos = rng.uniform(size=500).round(2)
    neg = rng.uniform(size=500).round(2)
    scores = [(d, True) for d in pos] + [(d, False) for d in neg]
    assert roc(scores).auc == pytest.approx(IDENTICAL_AUC, abs=1e-12)
    assert abs(roc(scores).auc - 0.5) <= 0.02


def test_separated_and_reversed():
    sep = [(0.9, True), (0.8, True), (0.1, False), (0.2, False)]
    assert roc(sep).auc == 1.0
    assert roc([(d, not a) for d, a in sep]).auc == 0.0
    assert roc([(0.5, True), (0.5, False)]).auc == 0.5


def test_thresholds_cover_observed_values():
    curve = roc([(0.3, True), (1.0, False), (0.0, True)])
    assert {0.0, 0.3, 1.0} <= set(curve.thresholds)
    assert curve.thresholds[-1] > 1.0


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        roc([(np.nan, True), (0.1, False)])


def test_balanced_pools():
    b, a = balanced_pools(10, 4, 0)
    assert len(b) == len(a) == 4 and len(set(b)) == 4
    assert np.array_equal(a, np.arange(4))
    with pytest.raises(ValueError):
        balanced_pools(0, 3, 0)


def test_attack_vector_configs():
    v = AttackVector("PGD", "L2", 224.0)
    cfg = v.config((32, 32, 1), steps=20)
    assert cfg.epsilon_255 == pytest.approx(32.0) and cfg.step_255 == pytest.approx(4.0)
    assert AttackVector("MIA", "Linf", 8).config((32, 32, 1)).epsilon_255 == 8
    assert v.name == "PGD-L2-224"


def test_detection_and_defense(small_split, small_model, matrix):
    cs, _, _, _, test = small_split
    ext = OracleExtractor(test.features, ExtractorNoise(0.0, 0.0))
    adv, mask = attack_batch(small_model, test, AttackConfig("PGD", "Linf", 16.0, steps=10))
    curve, scores = detection_eval(small_model, ext, matrix, cs, test, adv.subset(mask))
    check_curve(curve)
    assert curve.auc > 0.9
    assert sum(a for _, a in scores) == len(scores) // 2
    assert defense_eval(small_model, ext, matrix, cs, adv) == 1.0


TINY = GridSettings(
    class_sets=("CS3a",),
    per_class=20,
    vectors=(AttackVector("PGD", "Linf", 8.0), AttackVector("MIA", "L2", 300.0)),
    steps=3,
    classifier=evaluation.TrainConfig(epochs=2),
    adversarial=evaluation.TrainConfig(epochs=1),
    at_steps=2,
    extractor_epochs=2,
)


@pytest.fixture(scope="module")
def tiny_report():
    return attack_grid(TINY)


def test_grid_report_shape(tiny_report):
    assert set(tiny_report.columns()) == {"none", "PGD-Linf-8", "MIA-L2-300"}
    assert len(tiny_report.accuracy) == 3 * 3
    for curve in tiny_report.detection.values():
        check_curve(curve)


def test_emit_report_files(tiny_report, tmp_path):
    paths = emit_report(tiny_report, tmp_path)
    assert sorted(p.name for p in paths) == ["grid.csv", "grid_meta.json", "roc_CS3a.svg", "summary.svg"]
    rows = (tmp_path / "grid.csv").read_text().splitlines()
    assert rows[0] == "defense,attack,norm,epsilon,class_set,accuracy"
    assert "None,none,none,0,CS3a," in "\n".join(rows)
    assert "UnMask,MIA,L2,300,CS3a," in "\n".join(rows)


def test_report_round_trip(tiny_report, tmp_path):
    save_report(tiny_report, tmp_path / "r.json")
    back = load_report(tmp_path / "r.json")
    assert back.accuracy == tiny_report.accuracy
    assert back.detection == tiny_report.detection
    emit_report(back, tmp_path / "b")
    emit_report(tiny_report, tmp_path / "a")
    for name in ("grid.csv", "roc_CS3a.svg", "summary.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_empty_report_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_report(EvalReport({}, {}, {}), tmp_path)
    with pytest.raises(ValueError):
        attack_grid(GridSettings(class_sets=()))

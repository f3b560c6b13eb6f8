import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from featalign import advtrain, tinynet
from featalign.robust_stats import (
    FeatureFunction,
    assess,
    build_robust_dataset,
    categorize,
    linear_feature,
    one_vs_rest,
    patch_indicator,
    patch_response,
    robustness,
    usefulness,
    worst_case_values,
    write_reports,
)

# from tests/oracles/derive_values.py
LINEAR_P, LINEAR_GAMMA = 0.02033989789409826, -0.5044829934410721
INDEPENDENT_P = 0.00831771363182616


def _linear_problem(seed=11, n=2000, d=16):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=d)
    X = rng.uniform(0, 1, size=(n, d))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    return linear_feature(w, 0.1), X, y


def test_label_feature_has_p_one():
    y = np.where(np.arange(100) % 3 == 0, 1.0, -1.0)
    f = FeatureFunction("label", lambda X: X[:, 0])
    assert usefulness(f, y[:, None], y) == 1.0


def test_independent_feature_near_zero():
    rng = np.random.default_rng(5)
    vals = rng.uniform(-1, 1, size=10_000)
    y = np.where(rng.random(10_000) < 0.5, 1.0, -1.0)
    p = usefulness(FeatureFunction("noise", lambda X: X[:, 0]), vals[:, None], y)
    assert p == pytest.approx(INDEPENDENT_P, abs=1e-12)
    assert abs(p) < 0.05


def test_linear_gamma_closed_form():
    f, X, y = _linear_problem()
    assert usefulness(f, X, y) == pytest.approx(LINEAR_P, abs=1e-9)
    assert robustness(f, X, y, 0.05) == pytest.approx(LINEAR_GAMMA, abs=1e-3)


def test_l2_linear_gamma():
    f, X, y = _linear_problem()
    w = np.random.default_rng(11).normal(size=16)
    expect = LINEAR_P - 0.05 * np.linalg.norm(w)
    assert robustness(f, X, y, 0.05, norm="L2", steps=40) == pytest.approx(expect, abs=1e-3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 0.3), st.sampled_from(["Linf", "L2"]))
def test_gamma_never_exceeds_p(seed, eps, norm):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(50, 3, 3, 1))
    y = np.where(rng.random(50) < 0.5, 1.0, -1.0)
    f = linear_feature(rng.normal(size=(3, 3, 1)), float(rng.normal()))
    assert robustness(f, X, y, eps, norm, steps=5, probes=4) <= usefulness(f, X, y) + 0.01


def test_gamma_decreases_with_epsilon():
    f, X, y = _linear_problem()
    gs = [robustness(f, X, y, e) for e in (0.0, 0.01, 0.05, 0.1)]
    assert all(b <= a for a, b in zip(gs, gs[1:]))


def test_probe_only_warns():
    f = FeatureFunction("sq", lambda X: (X.reshape(len(X), -1) ** 2).sum(axis=1))
    X = np.random.default_rng(0).uniform(size=(20, 2))
    y = np.ones(20)
    with pytest.warns(UserWarning):
        g = robustness(f, X, y, 0.1)
    vals, probe_only = worst_case_values(f, X, y, 0.1)
    assert probe_only and g <= usefulness(f, X, y)


def test_label_and_value_checks():
    f = FeatureFunction("x", lambda X: X[:, 0])
    with pytest.raises(ValueError):
        usefulness(f, np.zeros((3, 1)), [0, 1, 1])
    with pytest.raises(ValueError):
        usefulness(FeatureFunction("nan", lambda X: X[:, 0] * np.nan), np.zeros((2, 1)), [1, -1])
    assert one_vs_rest([0, 1, 2], 1).tolist() == [-1, 1, -1]


def test_categories():
    assert categorize(0.01, None) == "neither"
    assert categorize(0.3, None) == "p-useful"
    assert categorize(0.3, 0.1) == "gamma-robust"
    assert categorize(0.3, -0.1) == "useful-non-robust"


def test_assess_and_report(tmp_path):
    f, X, y = _linear_problem()
    r = assess(f, X, y, eps=0.05)
    assert r.category == "neither" and r.gamma == pytest.approx(LINEAR_GAMMA, abs=1e-3)
    path = tmp_path / "r.csv"
    write_reports([r, assess(f, X, y)], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "feature,p,gamma,category" and lines[2].split(",")[2] == ""


def test_stamp_features_are_robust(small_split):
    cs, layout, train, _, _ = small_split
    f = layout.features[0]
    j = train.features.index(f)
    y = np.where(train.truth[:, j], 1.0, -1.0)
    r = assess(patch_response(layout, f), train.images, y, eps=2 / 255)
    assert r.p > 0 and 0 < r.gamma < r.p


def test_empty_robust_set_gives_chance(small_split):
    cs, layout, train, _, test = small_split
    r_train = build_robust_dataset(train, [], layout, 0)
    r_test = build_robust_dataset(test, [], layout, 1)
    net = advtrain.train_classifier(r_train, advtrain.TrainConfig(epochs=5), 0)
    acc = tinynet.accuracy(net, r_test.images, r_test.labels)
    assert abs(acc - 1 / 3) <= 0.15


def test_kept_indicators_keep_usefulness(small_split):
    # texture can fake a stamp in the original images; the robust copy only loses those false hits
    cs, layout, train, _, _ = small_split
    robust = build_robust_dataset(train, layout.features, layout, 0)
    for f in layout.features:
        j = train.features.index(f)
        t = train.truth[:, j]
        y = np.where(t, 1.0, -1.0)
        ind = patch_indicator(layout, f)
        assert ind(robust.images)[t].mean() == ind(train.images)[t].mean() == 1.0
        assert usefulness(ind, robust.images, y) >= usefulness(ind, train.images, y)


def test_robust_dataset_drops_unkept_stamps(small_split):
    cs, layout, train, _, _ = small_split
    keep = layout.features[:3]
    robust = build_robust_dataset(train, keep, layout, 0)
    gone = layout.features[3]
    j = train.features.index(gone)
    ind = patch_indicator(layout, gone)
    assert ind(robust.images[train.truth[:, j]]).mean() < 0.05
    assert robust.ids == train.ids and np.array_equal(robust.truth, train.truth)

import pytest
from hypothesis import given, settings, strategies as st

from featalign import alignment, tinynet
from featalign.alignment import ADVERSARIAL, BENIGN, decide, detect, jaccard, rectify
from featalign.extractor import ExtractorNoise, OracleExtractor
from featalign.features import ClassFeatureMatrix, FeatureVocabulary

FEATS = tuple("abcdefghij")
sets = st.frozensets(st.sampled_from(FEATS), max_size=len(FEATS))


@given(sets, sets)
def test_jaccard_symmetric_and_bounded(a, b):
    s = jaccard(a, b)
    assert s == jaccard(b, a)
    assert 0.0 <= s <= 1.0


@given(sets)
def test_jaccard_identity(a):
    assert jaccard(a, a) == (1.0 if a else 0.0)


def test_jaccard_empty_pair():
    assert jaccard(frozenset(), frozenset()) == 0.0
    assert detect(frozenset(), frozenset({"a"}), 0.5).verdict == ADVERSARIAL


@given(sets, sets, st.floats(0.0, 1.0))
def test_detect_boundary_rule(a, b, t):
    det = detect(a, b, t)
    assert det.distance == pytest.approx(1.0 - det.similarity)
    assert det.verdict == (ADVERSARIAL if det.distance >= t else BENIGN)


def test_detect_at_exact_threshold():
    # distance exactly 0.5 is flagged
    det = detect(frozenset("ab"), frozenset("a"), 0.5)
    assert det.distance == 0.5 and det.verdict == ADVERSARIAL


def test_threshold_range():
    with pytest.raises(ValueError):
        detect(frozenset(), frozenset(), 1.5)


def _toy_matrix():
    vocab = FeatureVocabulary(FEATS)
    rows = {"P": frozenset("abc"), "Q": frozenset("cde"), "R": frozenset("fgh")}
    return ClassFeatureMatrix(vocab, ("P", "Q", "R"), rows, {"all": ("P", "Q", "R")})


@settings(max_examples=300)
@given(sets)
def test_rectify_is_argmax_with_first_tie(ext):
    m = _toy_matrix()
    scores = [jaccard(ext, m[c]) for c in m.classes]
    best = max(scores)
    assert rectify(ext, m, m.classes) == m.classes[scores.index(best)]


def test_rectify_tie_goes_to_matrix_order():
    m = _toy_matrix()
    # "c" is equally similar to P and Q; class list order must not matter
    assert rectify(frozenset("c"), m, ["Q", "P"]) == "P"
    assert rectify(frozenset(), m, ["R", "Q"]) == "Q"


def test_decide_modes():
    m = _toy_matrix()
    ext = frozenset("fgh")
    keep = decide(ext, "R", m, m.classes, 0.5)
    assert keep.predicted_class == "R" and not keep.rectified
    fixed = decide(ext, "P", m, m.classes, 0.5)
    assert fixed.predicted_class == "R" and fixed.rectified
    always = decide(frozenset("abcd"), "Q", m, m.classes, 0.9, mode="always_rectify")
    assert always.predicted_class == "P"
    with pytest.raises(ValueError):
        decide(ext, "P", m, m.classes, 0.5, mode="other")


def test_pipeline_keeps_label_below_threshold(small_split, small_model, matrix):
    cs, _, _, _, test = small_split
    ext = OracleExtractor(test.features, ExtractorNoise(0.0, 0.0))
    outs = alignment.pipeline_batch(test, small_model, ext, matrix, cs, t=1.0)
    model_cls = [small_model.labels[int(p)] for p in tinynet.predict(small_model, test.images)]
    for o, mc in zip(outs, model_cls):
        assert o.model_class == mc
        if o.detection.distance < 1.0:
            assert o.predicted_class == mc

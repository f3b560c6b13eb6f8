import numpy as np
import pytest
from hypothesis import given, strategies as st

from featalign.dataset import Sample
from featalign.extractor import (
    ExtractionResult,
    ExtractorNoise,
    FileExtractor,
    OracleExtractor,
    export_detections,
    mean_feature_f1,
    to_feature_set,
    train_extractor,
)
from featalign.robust_stats import build_robust_dataset


def test_noiseless_oracle_is_exact(small_split):
    _, _, _, _, test = small_split
    ext = OracleExtractor(test.features, ExtractorNoise(0.0, 0.0))
    for s, r in zip(test, ext.extract_batch(test)):
        assert to_feature_set(r) == s.truth_features


def test_full_miss_rate_extracts_nothing(small_split):
    _, _, _, _, test = small_split
    ext = OracleExtractor(test.features, ExtractorNoise(1.0, 0.0))
    assert all(not r.detections for r in ext.extract_batch(test))


def test_oracle_noise_depends_only_on_id(small_split):
    _, _, _, _, test = small_split
    ext = OracleExtractor(test.features, ExtractorNoise(), seed=3)
    shifted = test.with_images(np.clip(test.images + 0.1, 0, 1))
    assert ext.extract_batch(test) == ext.extract_batch(shifted)


def test_oracle_noise_rates(small_split):
    _, _, train, _, _ = small_split
    ext = OracleExtractor(train.features, ExtractorNoise(0.4, 0.05), seed=1)
    got = np.array([[f in to_feature_set(r) for f in train.features] for r in ext.extract_batch(train)])
    miss = 1 - got[train.truth].mean()
    spur = got[~train.truth].mean()
    assert abs(miss - 0.4) < 0.05 and abs(spur - 0.05) < 0.02


@given(st.dictionaries(st.sampled_from("abcdef"), st.floats(0, 1)), st.floats(0, 1), st.floats(0, 1))
def test_cutoff_monotone(d, c1, c2):
    r = ExtractionResult.from_dict(d)
    lo, hi = sorted((c1, c2))
    assert to_feature_set(r, hi) <= to_feature_set(r, lo)


def test_result_validation():
    with pytest.raises(ValueError):
        ExtractionResult((("a", 1.5),))
    with pytest.raises(ValueError):
        ExtractionResult((("a", 0.5), ("a", 0.6)))
    with pytest.raises(ValueError):
        to_feature_set(ExtractionResult(()), 2.0)


def test_file_extractor_round_trip(tmp_path, small_split):
    _, _, _, _, test = small_split
    ext = OracleExtractor(test.features, ExtractorNoise(0.2, 0.05))
    path = tmp_path / "det.jsonl"
    export_detections(ext, test, path)
    back = FileExtractor.from_file(path)
    assert back.extract_batch(test) == ext.extract_batch(test)
    with pytest.raises(KeyError):
        back.extract(Sample(test.images[0], "Car", frozenset(), "missing"))


def test_file_extractor_reports_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a", "detections": []}\n{"id": "b"}\n')
    with pytest.raises(ValueError, match=":2:"):
        FileExtractor.from_file(path)


def test_trained_extractor_recovers_features(small_split):
    _, layout, train, _, test = small_split
    robust = build_robust_dataset(train, layout.features, layout, 0)
    ext = train_extractor(robust, epochs=20, seed=0)
    assert mean_feature_f1(ext, test) >= 0.9
    with pytest.raises(ValueError):
        train_extractor(train.subset([]))

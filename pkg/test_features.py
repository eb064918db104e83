import numpy as np
import pytest

from Backend.datamodel import Dataset, snippet_index
from Backend.errors import ArgumentError, ShapeError
from Backend.extract_all import (
    ExtractorSpec,
    FeatureExtractor,
    feature_path,
    load_features,
    pooled_grid_statistics,
    store_features,
)
from Backend.saliency import apply_mask


def _snippet_extractor(**kwargs):
    return FeatureExtractor(ExtractorSpec("toy_snippet", kwargs.pop("channels", 16), **kwargs))


def test_zero_video_gives_projection_of_zero_statistics():
    features = _snippet_extractor().extract_snippet_features(np.zeros((8, 9, 9)), 2, 4)
    assert features.shape == (2, 16)
    np.testing.assert_array_equal(features, 0.0)


def test_identical_snippets_give_identical_rows(rng):
    snippet = rng.random((4, 9, 12))
    frames = np.concatenate([snippet, snippet, snippet])
    features = _snippet_extractor().extract_snippet_features(frames, 3, 4)
    np.testing.assert_array_equal(features[0], features[1])
    np.testing.assert_array_equal(features[1], features[2])


def test_same_seed_same_features(rng):
    frames = rng.random((8, 9, 9))
    a = _snippet_extractor(seed=5).extract_snippet_features(frames, 2, 4)
    b = _snippet_extractor(seed=5).extract_snippet_features(frames, 2, 4)
    c = _snippet_extractor(seed=6).extract_snippet_features(frames, 2, 4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_empty_video_rejected():
    with pytest.raises(ArgumentError):
        _snippet_extractor().extract_snippet_features(np.zeros((0, 9, 9)), 2, 4)


def test_frame_count_must_match_positions():
    with pytest.raises(ShapeError):
        _snippet_extractor().extract_snippet_features(np.zeros((7, 9, 9)), 2, 4)


def test_all_masked_frame_gives_zero_feature(rng):
    extractor = FeatureExtractor(ExtractorSpec("toy_frame", 8))
    frames = rng.random((3, 9, 9))
    frames[1] = 0.0
    features = extractor.extract_frame_features(frames)
    assert features.shape == (3, 8)
    np.testing.assert_array_equal(features[1], 0.0)


def test_frame_order_follows_input_order(rng):
    extractor = FeatureExtractor(ExtractorSpec("toy_frame", 8))
    frames = rng.random((6, 9, 9))
    order = rng.permutation(6)
    features = extractor.extract_frame_features(frames)
    np.testing.assert_allclose(extractor.extract_frame_features(frames[order]), features[order], rtol=1e-5, atol=1e-6)


def test_mask_changes_features_only_when_it_removes_pixels(rng):
    extractor = FeatureExtractor(ExtractorSpec("toy_frame", 32))
    mask = np.ones((3, 3), dtype=bool)
    mask[0, 0] = False
    frame = rng.random((9, 9)) + 0.1
    blank_corner = frame.copy()
    blank_corner[:3, :3] = 0.0
    frames = np.stack([frame, blank_corner])
    masked = np.stack([apply_mask(f, mask) for f in frames])
    plain = extractor.extract_frame_features(frames)
    hidden = extractor.extract_frame_features(masked)
    assert not np.allclose(plain[0], hidden[0])
    np.testing.assert_array_equal(plain[1], hidden[1])


def test_pooled_statistics_layout():
    pixels = np.zeros((2, 6, 6))
    pixels[:, :2, :2] = 3.0
    stats = pooled_grid_statistics(pixels, 3)
    assert stats.shape == (27,)
    assert stats[:3].tolist() == [3.0, 0.0, 3.0]
    assert np.all(stats[3:] == 0)


def test_abnormal_snippets_separate_from_normal(tiny_dataset):
    dataset = Dataset.open(tiny_dataset)
    extractor = _snippet_extractor(channels=32)
    annotations = dataset.annotations()
    normal, abnormal = [], []
    for sample in dataset.samples:
        frames = dataset.load_frames(sample.video_id)
        index, _ = snippet_index(sample.frame_count, 8, 4)
        features = extractor.extract_snippet_features(frames[index], 8, 4)
        if not sample.is_abnormal:
            normal.append(features)
            continue
        start, end = annotations[sample.video_id][0]
        for t in range(8):
            if start <= 4 * t + 3 and 4 * t <= end:
                abnormal.append(features[t])
    normal = np.concatenate(normal)
    centre = normal.mean(axis=0)
    spread = np.linalg.norm(normal - centre, axis=1).max()
    assert abnormal
    assert min(np.linalg.norm(a - centre) for a in abnormal) > spread


def test_store_and_load(tmp_path, rng):
    features = rng.random((4, 6)).astype(np.float32)
    path = feature_path(tmp_path, "v1", "toy_frame")
    assert path.name == "v1.toy_frame.fdpn"
    store_features(path, features)
    np.testing.assert_array_equal(load_features(path), features)
    with pytest.raises(ArgumentError):
        store_features(path, np.array([np.nan]))


def test_precomputed_features(tmp_path, rng):
    rows = rng.random((10, 5)).astype(np.float32)
    store_features(feature_path(tmp_path, "v1", "resnet"), rows)
    extractor = FeatureExtractor(ExtractorSpec("precomputed", 5, source="resnet", feature_dir=str(tmp_path)))
    index = np.array([0, 0, 3, 9])
    np.testing.assert_array_equal(extractor.extract_frame_features(None, "v1", index), rows[index])
    wrong = FeatureExtractor(ExtractorSpec("precomputed", 6, source="resnet", feature_dir=str(tmp_path)))
    with pytest.raises(ShapeError):
        wrong.extract_frame_features(None, "v1", index)


def test_unknown_kind():
    with pytest.raises(ArgumentError):
        ExtractorSpec("clip", 8)

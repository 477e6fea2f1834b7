import numpy as np
import pytest
import torch

from facestyle.errors import MetricError
from facestyle.metrics import (
    FeatureSet,
    FidExtractor,
    fid,
    identity_distance,
    perceptual_distance,
    semantic_distance,
)
from facestyle.toydata import make_content_set


def gaussian_features(n, m, scale, seed, extractor="test"):
    rng = np.random.default_rng(seed)
    return FeatureSet(rng.normal(0.0, scale, size=(n, m)), extractor)


def test_feature_set_validation():
    with pytest.raises(MetricError):
        FeatureSet(np.zeros(5), "x")
    with pytest.raises(MetricError):
        FeatureSet(np.zeros((1, 5)), "x")
    bad = np.zeros((3, 5))
    bad[0, 0] = np.nan
    with pytest.raises(MetricError):
        FeatureSet(bad, "x")


def test_self_fid_is_zero():
    a = gaussian_features(500, 8, 1.0, seed=0)
    b = FeatureSet(a.features.copy(), a.extractor_id)
    assert fid(a, b) <= 1e-6


def test_fid_symmetric():
    a = gaussian_features(400, 8, 1.0, seed=1)
    b = gaussian_features(400, 8, 2.0, seed=2)
    assert abs(fid(a, b) - fid(b, a)) <= 1e-6


def test_fid_never_negative():
    # near-identical sets: numerical noise must not push the value below zero
    a = gaussian_features(50, 8, 1.0, seed=3)
    b = FeatureSet(a.features + 1e-12, a.extractor_id)
    assert fid(a, b) >= 0.0


def test_fid_isotropic_gaussian_oracle():
    """N(0, I_m) vs N(0, 4 I_m): the closed-form distance is exactly m."""
    m, n = 8, 20_000
    a = gaussian_features(n, m, 1.0, seed=10)
    b = gaussian_features(n, m, 2.0, seed=11)
    assert fid(a, b) == pytest.approx(m, abs=0.3)


def test_fid_mean_shift_oracle():
    """Pure translation by mu: distance is |mu|^2."""
    rng = np.random.default_rng(7)
    base = rng.normal(size=(20_000, 8))
    mu = np.arange(8) * 0.1
    a = FeatureSet(base, "t")
    b = FeatureSet(base + mu, "t")
    assert fid(a, b) == pytest.approx(float(mu @ mu), abs=1e-6)


def test_fid_rejects_extractor_mismatch():
    a = gaussian_features(100, 8, 1.0, seed=0, extractor="one")
    b = gaussian_features(100, 8, 1.0, seed=1, extractor="two")
    with pytest.raises(MetricError, match="different extractors"):
        fid(a, b)


def test_fid_rejects_dim_mismatch():
    a = gaussian_features(100, 8, 1.0, seed=0)
    b = gaussian_features(100, 4, 1.0, seed=1)
    with pytest.raises(MetricError, match="dims differ"):
        fid(a, b)


def test_extractor_deterministic_and_id_stable():
    imgs = make_content_set(6, 16, seed=3)
    ex1 = FidExtractor(88, 16)
    ex2 = FidExtractor(88, 16)
    a = ex1.extract(imgs)
    b = ex2.extract(imgs)
    assert a.extractor_id == b.extractor_id == "fid-random-88-16"
    assert np.array_equal(a.features, b.features)


def test_extractor_chunking_invariant():
    imgs = make_content_set(7, 16, seed=4)
    ex = FidExtractor(1, 16)
    a = ex.extract(imgs, batch=2)
    b = ex.extract(imgs, batch=7)
    assert np.allclose(a.features, b.features, atol=1e-5)


def test_extractor_rejects_bad_shape():
    ex = FidExtractor(1, 16)
    with pytest.raises(MetricError):
        ex.extract(torch.zeros(3, 16, 16))


def test_perceptual_distance_self_zero(nets):
    imgs = make_content_set(3, 16, seed=5)
    assert perceptual_distance(imgs, imgs, nets) == 0.0
    # cosine of a vector with itself lands within fp32 normalization noise of 1
    assert identity_distance(imgs, imgs, nets) <= 1e-6


def test_perceptual_distance_positive(nets):
    a = make_content_set(3, 16, seed=5)
    b = make_content_set(3, 16, seed=6)
    assert perceptual_distance(a, b, nets) > 0.0


def test_distance_rejects_mismatched_batches(nets):
    a = make_content_set(3, 16, seed=5)
    b = make_content_set(2, 16, seed=6)
    with pytest.raises(MetricError):
        perceptual_distance(a, b, nets)


def test_semantic_distance_self_is_zero(tiny_gen, nets):
    assert semantic_distance(tiny_gen, tiny_gen, count=4, seed=0, nets=nets) == 0.0


def test_semantic_distance_deterministic(tiny_gen, tiny_config, nets):
    from facestyle.generator import Generator

    other = Generator(tiny_config, seed=1)
    d1 = semantic_distance(tiny_gen, other, count=4, seed=0, nets=nets)
    d2 = semantic_distance(tiny_gen, other, count=4, seed=0, nets=nets)
    assert d1 == d2 > 0.0

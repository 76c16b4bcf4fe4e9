import math

import numpy as np
import pytest

from maskanynet.errors import UndefinedSimilarityError
from maskanynet.masking import apply_mask, generate_patch_mask
from maskanynet.metrics import (
    AnalysisRecord,
    FScoreConfig,
    deep_similarity,
    default_feature_extractor,
    entropy_delta,
    f_score,
    make_record,
    shannon_entropy,
    similarity_score,
)


class TestShannonEntropy:
    def test_constant_is_zero(self):
        assert shannon_entropy(np.zeros((3, 8, 8), dtype=np.float32)) == pytest.approx(0.0, abs=1e-9)
        assert shannon_entropy(np.full((16, 16), 200, dtype=np.uint8)) == pytest.approx(0.0, abs=1e-9)

    def test_fair_coin_is_one_bit(self):
        checker = np.indices((16, 16)).sum(axis=0) % 2
        img = (checker * 255).astype(np.uint8)
        assert shannon_entropy(img) == pytest.approx(1.0, abs=1e-9)

    def test_uniform_256_is_eight_bits(self):
        img = np.arange(256, dtype=np.uint8).reshape(16, 16)
        assert shannon_entropy(img) == pytest.approx(8.0, abs=1e-9)

    def test_bounds_and_permutation_invariance(self, rng):
        img = (rng.random((32, 32)) * 255).astype(np.uint8)
        h = shannon_entropy(img)
        assert 0.0 <= h <= 8.0
        shuffled = rng.permutation(img.ravel()).reshape(img.shape)
        assert shannon_entropy(shuffled) == pytest.approx(h, abs=1e-12)

    def test_float_and_uint8_agree(self, rng):
        img = (rng.random((3, 16, 16)) * 255).round().astype(np.uint8)
        assert shannon_entropy(img.astype(np.float64) / 255.0) == pytest.approx(
            shannon_entropy(img), abs=1e-9
        )

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            shannon_entropy(np.zeros((3, 0, 4), dtype=np.float32))

    def test_masking_lowers_entropy_on_natural_images(self, natural240):
        for img in natural240[:20]:
            spec = generate_patch_mask((64, 64), 16, 0.25, 0)
            masked = apply_mask(np.ascontiguousarray(img), spec)
            assert shannon_entropy(masked.pixels) <= shannon_entropy(img) + 1e-9


class TestEntropyDelta:
    def test_identical_inputs_zero(self, image64):
        assert entropy_delta(image64, image64) == pytest.approx(0.0, abs=1e-12)

    def test_constant_vs_fair_coin(self):
        const = np.zeros((8, 8), dtype=np.uint8)
        coin = (np.indices((8, 8)).sum(axis=0) % 2 * 255).astype(np.uint8)
        assert entropy_delta(const, coin) == pytest.approx(1.0, abs=1e-9)

    def test_accepts_masked_image_wrapper(self, image64):
        spec = generate_patch_mask((64, 64), 16, 0.25, 1)
        masked = apply_mask(image64, spec)
        assert entropy_delta(masked, image64) == pytest.approx(
            shannon_entropy(image64) - shannon_entropy(masked.pixels), abs=1e-12
        )


class TestDeepSimilarity:
    def test_self_similarity_is_one(self, image64):
        extractor = default_feature_extractor()
        assert deep_similarity(image64, image64, extractor) == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_stub_is_zero(self):
        feats = {0: np.array([1.0, 0.0]), 1: np.array([0.0, 1.0])}
        extractor = lambda img: feats[int(img[0, 0, 0])]
        a = np.zeros((1, 2, 2)),
        a = np.zeros((1, 2, 2))
        b = np.ones((1, 2, 2))
        assert deep_similarity(a, b, extractor) == pytest.approx(0.0, abs=1e-12)

    def test_zero_vector_raises(self, image64):
        with pytest.raises(UndefinedSimilarityError):
            deep_similarity(image64, image64, lambda img: np.zeros(4))

    def test_nonnegative_features_give_unit_interval(self, rng):
        extractor = default_feature_extractor()
        a = rng.random((3, 64, 64), dtype=np.float32)
        b = rng.random((3, 64, 64), dtype=np.float32)
        assert 0.0 <= deep_similarity(a, b, extractor) <= 1.0


class TestSimilarityScore:
    def test_anchor_match(self):
        assert similarity_score(0.5) == pytest.approx(1.0, abs=1e-12)

    def test_extreme_value(self):
        assert similarity_score(1.0) == pytest.approx(math.exp(-0.5), abs=1e-9)

    def test_symmetry_about_anchor(self):
        for d in (0.1, 0.25, 0.5):
            assert similarity_score(0.5 + d) == pytest.approx(similarity_score(0.5 - d), abs=1e-12)

    def test_strictly_decreasing_in_distance(self):
        scores = [similarity_score(0.5 + d) for d in (0.0, 0.1, 0.2, 0.4)]
        assert all(a > b for a, b in zip(scores, scores[1:]))
        assert all(0.0 < s <= 1.0 for s in scores)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            similarity_score(float("nan"))


class TestFScore:
    def test_single_record_arithmetic(self):
        rec = AnalysisRecord(h_m=0, h_c=1, delta_h=1.0, s_ds=0.5, s=1.0, strategy="patch")
        assert f_score([rec]) == 1.0

    def test_all_zero_records(self):
        recs = [AnalysisRecord(0, 0, 0.0, 0, 0.0, "patch")] * 3
        assert f_score(recs) == 0.0

    def test_two_record_average(self):
        recs = [
            AnalysisRecord(0, 0, 0.0, 0, 1.0, "patch"),
            AnalysisRecord(0, 1, 1.0, 0, 0.0, "patch"),
        ]
        assert f_score(recs) == pytest.approx(0.5, abs=1e-12)

    def test_delta_h_contribution_is_linear(self):
        recs = [AnalysisRecord(0, 1, 0.8, 0.5, 0.0, "grid") for _ in range(4)]
        scaled = [AnalysisRecord(0, 1, 2.4, 0.5, 0.0, "grid") for _ in range(4)]
        assert f_score(scaled) == pytest.approx(3 * f_score(recs), abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            f_score([])

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            FScoreConfig(w1=-0.1)


def test_make_record_consistency():
    rec = make_record(h_m=6.0, h_c=7.2, s_ds=0.8, strategy="grid")
    assert rec.delta_h == pytest.approx(1.2)
    assert rec.s == pytest.approx(similarity_score(0.8))
    assert rec.strategy == "grid"

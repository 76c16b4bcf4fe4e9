import numpy as np
import pytest
import torch
import torch.nn as nn

from maskanynet.errors import ConfigurationError
from maskanynet.explain import (
    dump_features,
    feature_points,
    grad_cam,
    overlay_heatmap,
    save_comparison_grid,
    save_heatmap_overlay,
)
from maskanynet.model import BaselineClassifier, MaskAnyNet, MaskPolicy


def small_model():
    torch.manual_seed(0)
    return MaskAnyNet("resnet_tiny", policy=MaskPolicy(block_size=8, size_range=(4, 8)))


class _ToyCam(nn.Module):
    """One positive-weight channel; the logit is the activation sum."""

    def __init__(self):
        super().__init__()
        self.layer = nn.Conv2d(1, 1, 1, bias=False)
        with torch.no_grad():
            self.layer.weight.fill_(1.0)

    def forward(self, x):
        act = torch.relu(self.layer(x))
        return act.sum(dim=(2, 3))  # logits over 1 class


class TestGradCam:
    def test_heatmap_dims_match_input(self):
        result = grad_cam(small_model(), np.random.rand(3, 32, 32).astype(np.float32))
        assert result.map.shape == (32, 32)

    def test_normalized_to_unit_interval(self):
        result = grad_cam(small_model(), np.random.rand(3, 32, 32).astype(np.float32))
        assert result.map.min() == pytest.approx(0.0)
        assert result.map.max() == pytest.approx(1.0)
        assert ((0 <= result.map) & (result.map <= 1)).all()

    def test_target_class_recorded(self):
        result = grad_cam(small_model(), np.random.rand(3, 32, 32).astype(np.float32),
                          target_class=3)
        assert result.target_class == 3

    def test_toy_model_peak_matches_activation_peak(self):
        model = _ToyCam()
        img = np.zeros((1, 8, 8), dtype=np.float32)
        img[0, 5, 2] = 1.0
        result = grad_cam(model, img, target_class=0, layer="layer")
        assert np.unravel_index(result.map.argmax(), result.map.shape) == (5, 2)

    def test_constant_zero_activation_guard(self):
        model = _ToyCam()
        with torch.no_grad():
            model.layer.weight.zero_()
        result = grad_cam(model, np.random.rand(1, 8, 8).astype(np.float32),
                          target_class=0, layer="layer")
        assert not result.map.any()

    def test_non_spatial_layer_rejected(self):
        model = BaselineClassifier("resnet_tiny")
        with pytest.raises(ConfigurationError):
            grad_cam(model, np.random.rand(3, 32, 32).astype(np.float32),
                     layer="backbone.fc")

    def test_unknown_layer_path_rejected(self):
        with pytest.raises(ConfigurationError):
            grad_cam(small_model(), np.random.rand(3, 32, 32).astype(np.float32),
                     layer="backbone.missing")

    def test_deterministic_in_eval(self):
        model = small_model()
        img = np.random.rand(3, 32, 32).astype(np.float32)
        a = grad_cam(model, img, target_class=1)
        b = grad_cam(model, img, target_class=1)
        assert np.array_equal(a.map, b.map)

    def test_works_on_pvit(self):
        torch.manual_seed(0)
        model = BaselineClassifier("pvit_tiny")
        result = grad_cam(model, np.random.rand(3, 32, 32).astype(np.float32))
        assert result.map.shape == (32, 32)


class TestDumpFeatures:
    def test_split_layer_on_both_branches(self):
        model = small_model()
        feats = dump_features(model, np.random.rand(3, 32, 32).astype(np.float32), ["split"])
        assert set(feats) == {"split.masked", "split.reuse"}
        assert feats["split.masked"].shape == feats["split.reuse"].shape

    def test_empty_layer_list(self):
        assert dump_features(small_model(), np.random.rand(3, 32, 32), []) == {}

    def test_unknown_layer_lists_valid(self):
        with pytest.raises(ConfigurationError, match="align"):
            dump_features(small_model(), np.random.rand(3, 32, 32), ["bogus"])

    def test_summary_images_have_feature_dims(self, tmp_path):
        model = small_model()
        feats = dump_features(model, np.random.rand(3, 32, 32).astype(np.float32),
                              ["align"], out_dir=str(tmp_path))
        from PIL import Image

        arr = feats["align"]
        with Image.open(tmp_path / "align.png") as im:
            assert im.size == (arr.shape[2], arr.shape[1])

    def test_baseline_points(self):
        model = BaselineClassifier("resnet_tiny")
        points = feature_points(model)
        assert {"stem", "stage1", "stage2", "stage3"} <= set(points)


class TestWriters:
    def test_overlay_blend_shape_and_range(self):
        img = np.random.rand(3, 16, 16)
        cam = np.random.rand(16, 16)
        out = overlay_heatmap(img, cam)
        assert out.shape == (16, 16, 3)
        assert out.min() >= 0 and out.max() <= 1

    def test_save_overlay_and_grid(self, tmp_path):
        model = small_model()
        imgs = [np.random.rand(3, 32, 32).astype(np.float32) for _ in range(2)]
        results = [grad_cam(model, im, target_class=0) for im in imgs]
        base = BaselineClassifier("resnet_tiny")
        base_results = [grad_cam(base, im, target_class=0) for im in imgs]
        p1 = save_heatmap_overlay(imgs[0], results[0], str(tmp_path / "o.png"))
        p2 = save_comparison_grid(imgs, base_results, results, str(tmp_path / "grid.png"))
        from PIL import Image

        with Image.open(p1) as im:
            assert im.size == (32, 32)
        with Image.open(p2) as im:
            assert im.size == (64, 96)  # 2 columns x 3 rows

    def test_grid_length_mismatch(self, tmp_path):
        with pytest.raises(ConfigurationError):
            save_comparison_grid([np.zeros((3, 8, 8))], [], [], str(tmp_path / "g.png"))

"""Class-activation heatmaps and intermediate-feature dumps.

Grad-CAM weights a spatial layer's activations by the spatially averaged
gradient of the target logit, rectifies, upsamples to the input size and
min-max normalizes. The default layer is the last spatial stage of the
high-level extractor, so dual-branch heatmaps reflect the fused features.
"""

import os
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from maskanynet.errors import ConfigurationError
from maskanynet.model import MaskAnyNet


@dataclass
class HeatmapResult:
    map: np.ndarray  # (H, W) in [0, 1]
    target_class: int
    layer: str


def _module_by_path(model, path):
    mod = model
    for part in path.split("."):
        if not hasattr(mod, part):
            raise ConfigurationError(f"model has no layer {path!r}")
        mod = getattr(mod, part)
    return mod


def _default_cam_layer(model):
    backbone = getattr(model, "backbone", model)
    if not hasattr(backbone, "cam_layer"):
        raise ConfigurationError("model has no registered heatmap layer; pass layer=")
    return "backbone.cam_layer", backbone.cam_layer()


def grad_cam(model, image, target_class=None, layer=None):
    """Grad-CAM heatmap for one (C,H,W) image.

    ``layer`` is a dotted module path (e.g. "backbone.stage3"); the layer
    must output a (B,C,h,w) map.
    """
    if layer is None:
        layer_name, module = _default_cam_layer(model)
    else:
        layer_name, module = layer, _module_by_path(model, layer)

    x = torch.as_tensor(np.asarray(image, dtype=np.float32))
    if x.dim() != 3:
        raise ConfigurationError("grad_cam expects a single (C,H,W) image")
    x = x.unsqueeze(0)

    store = {}

    def fwd_hook(_mod, _inp, out):
        store["act"] = out
        if out.requires_grad:
            out.register_hook(lambda g: store.__setitem__("grad", g))

    h1 = module.register_forward_hook(fwd_hook)
    try:
        model.eval()
        model.zero_grad(set_to_none=True)
        logits = model(x)
        if target_class is None:
            target_class = int(logits.argmax(dim=1).item())
        logits[0, target_class].backward()
    finally:
        h1.remove()
        model.zero_grad(set_to_none=True)

    act, grad = store.get("act"), store.get("grad")
    if act is None or act.dim() != 4:
        raise ConfigurationError(f"layer {layer_name!r} does not produce a spatial map")
    if grad is None:
        raise ConfigurationError(f"layer {layer_name!r} received no gradient from the target logit")
    weights = grad.mean(dim=(2, 3), keepdim=True)
    cam = torch.relu((weights * act).sum(dim=1, keepdim=True))
    cam = F.interpolate(cam, size=x.shape[-2:], mode="bilinear", align_corners=False)
    cam = cam[0, 0].detach().numpy().astype(np.float64)
    span = cam.max() - cam.min()
    if span <= 0:
        cam = np.zeros_like(cam)
    else:
        cam = (cam - cam.min()) / span
    return HeatmapResult(map=cam, target_class=target_class, layer=layer_name)


def feature_points(model):
    """Named modules whose outputs are worth dumping for a given model."""
    if isinstance(model, MaskAnyNet) and model.fusion.level == "feature":
        return {
            "split": model.split.boundary_module,
            "align": model.align,
            "high": model.backbone.cam_layer(),
        }
    backbone = getattr(model, "backbone", model)
    points = {"stem": backbone.stem} if hasattr(backbone, "stem") else {}
    for name in ("stage1", "stage2", "stage3", "tail"):
        if hasattr(backbone, name):
            points[name] = getattr(backbone, name)
    return points


def dump_features(model, image, layers, out_dir=None):
    """Capture named intermediate tensors for one image.

    A layer that runs once per branch (the split boundary under a shared
    low extractor) yields one entry per call: "<name>.masked" then
    "<name>.reuse". With ``out_dir`` set, a per-channel-mean grayscale PNG
    is written per tensor at the feature's own spatial size.
    """
    points = feature_points(model)
    unknown = [l for l in layers if l not in points]
    if unknown:
        raise ConfigurationError(f"unknown layers {unknown}; valid: {sorted(points)}")
    if not layers:
        return {}

    captured = {name: [] for name in layers}
    handles = []
    for name in layers:
        def hook(_mod, _inp, out, _name=name):
            captured[_name].append(out.detach())
        handles.append(points[name].register_forward_hook(hook))
    try:
        model.eval()
        x = torch.as_tensor(np.asarray(image, dtype=np.float32)).unsqueeze(0)
        with torch.no_grad():
            model(x)
    finally:
        for h in handles:
            h.remove()

    dual = isinstance(model, MaskAnyNet) and model.fusion.level == "feature" and model.fusion.shared_low
    out = {}
    for name, tensors in captured.items():
        if len(tensors) == 2 and dual and name == "split":
            out[f"{name}.masked"] = tensors[0][0].numpy()
            out[f"{name}.reuse"] = tensors[1][0].numpy()
        else:
            for i, t in enumerate(tensors):
                key = name if len(tensors) == 1 else f"{name}.{i}"
                out[key] = t[0].numpy()

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        from PIL import Image

        for key, feat in out.items():
            summary = feat.mean(axis=0)
            span = summary.max() - summary.min()
            gray = (summary - summary.min()) / span if span > 0 else np.zeros_like(summary)
            img = np.rint(gray * 255.0).astype(np.uint8)
            Image.fromarray(img).save(os.path.join(out_dir, f"{key}.png"))
    return out


# Five-anchor heat gradient (dark blue -> red) for overlays.
_HEAT_ANCHORS = np.array(
    [[0, 0, 96], [0, 96, 255], [0, 255, 128], [255, 224, 0], [255, 32, 0]], dtype=np.float64
)


def _colorize(cam):
    pos = np.clip(cam, 0.0, 1.0) * (len(_HEAT_ANCHORS) - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, len(_HEAT_ANCHORS) - 1)
    frac = (pos - lo)[..., None]
    return (_HEAT_ANCHORS[lo] * (1 - frac) + _HEAT_ANCHORS[hi] * frac) / 255.0


def overlay_heatmap(image, cam, alpha=0.5):
    """Blend a [0,1] (C,H,W) image with a colorized heatmap; returns HxWx3."""
    rgb = np.asarray(image, dtype=np.float64)
    if rgb.ndim == 3 and rgb.shape[0] in (1, 3):
        rgb = rgb.transpose(1, 2, 0)
    if rgb.shape[2] == 1:
        rgb = np.repeat(rgb, 3, axis=2)
    heat = _colorize(np.asarray(cam, dtype=np.float64))
    return np.clip((1 - alpha) * rgb + alpha * heat, 0.0, 1.0)


def save_heatmap_overlay(image, result, path, alpha=0.5):
    from PIL import Image

    blended = overlay_heatmap(image, result.map, alpha)
    Image.fromarray(np.rint(blended * 255.0).astype(np.uint8)).save(path)
    return path


def save_comparison_grid(originals, baseline_results, model_results, path, alpha=0.5):
    """Three-row grid: originals, baseline heatmaps, dual-branch heatmaps."""
    from PIL import Image

    if not (len(originals) == len(baseline_results) == len(model_results)):
        raise ConfigurationError("comparison grid needs equal-length rows")
    rows = []
    for row in (
        [np.asarray(o, dtype=np.float64).transpose(1, 2, 0) for o in originals],
        [overlay_heatmap(o, r.map, alpha) for o, r in zip(originals, baseline_results)],
        [overlay_heatmap(o, r.map, alpha) for o, r in zip(originals, model_results)],
    ):
        rows.append(np.concatenate(row, axis=1))
    grid = np.clip(np.concatenate(rows, axis=0), 0.0, 1.0)
    Image.fromarray(np.rint(grid * 255.0).astype(np.uint8)).save(path)
    return path

"""Quantitative comparison of masking strategies.

Information diversity is measured by 8-bit Shannon entropy and the entropy
gap between the reuse image and the masked image; information reliability
by cosine similarity of deep features, squashed around an anchor:

    S = exp(-|S_ds - S_a|)

and both are blended into a corpus-level score

    F = mean_i(w1 * S_i + w2 * dH_i)
"""

import math
from dataclasses import dataclass

import numpy as np

from maskanynet.errors import UndefinedSimilarityError

# ITU-R BT.601 luma weights; entropy is always taken over one 0-255 histogram.
_LUMA = np.array([0.299, 0.587, 0.114])


def _to_intensities(image):
    image = np.asarray(getattr(image, "pixels", image))
    if image.size == 0:
        raise ValueError("empty image has no entropy")
    if image.ndim == 2 and image.dtype == np.uint8:
        return image
    arr = image.astype(np.float64)
    if image.dtype == np.uint8:
        arr /= 255.0
    if arr.ndim == 3:
        if image.shape[0] == 3:
            arr = np.tensordot(_LUMA, arr, axes=1)
        elif image.shape[0] == 1:
            arr = arr[0]
        else:
            raise ValueError(f"expected 1 or 3 channels, got shape {image.shape}")
    elif arr.ndim != 2:
        raise ValueError(f"expected a 2D or (C,H,W) image, got shape {image.shape}")
    return np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def shannon_entropy(image):
    """Entropy in bits of the 8-bit intensity histogram; in [0, 8].

    Color images are converted to luma first; float images are taken as
    [0, 1] and quantized to 256 levels.
    """
    vals = _to_intensities(image)
    counts = np.bincount(vals.ravel(), minlength=256)
    p = counts / vals.size
    nz = p[p > 0]
    h = float(-(nz * np.log2(nz)).sum())
    return 0.0 if h == 0.0 else h


def entropy_delta(masked, reuse_resized):
    """H(reuse) - H(masked); negative when the reuse image is the blander one."""
    return shannon_entropy(reuse_resized) - shannon_entropy(masked)


def deep_similarity(a, b, extractor):
    """Cosine similarity of the extractor's feature vectors for two images.

    With non-negative features (pooled post-ReLU activations) the value
    lies in [0, 1].
    """
    fa = np.asarray(extractor(a), dtype=np.float64).ravel()
    fb = np.asarray(extractor(b), dtype=np.float64).ravel()
    na = np.linalg.norm(fa)
    nb = np.linalg.norm(fb)
    if na == 0.0 or nb == 0.0:
        raise UndefinedSimilarityError("zero feature vector; cosine undefined")
    return float(fa @ fb / (na * nb))


def similarity_score(s_ds, s_a=0.5):
    """exp(-|s_ds - s_a|): peaks at 1 when the similarity hits the anchor."""
    if not (math.isfinite(s_ds) and math.isfinite(s_a)):
        raise ValueError("similarity inputs must be finite")
    return math.exp(-abs(s_ds - s_a))


@dataclass
class FScoreConfig:
    """Weights and anchor for the combined strategy score."""

    w1: float = 0.5
    w2: float = 0.5
    s_a: float = 0.5
    pair_count: int = 1000

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0:
            raise ValueError("weights must be nonnegative")


@dataclass
class AnalysisRecord:
    """Per-sample masking-analysis measurements for one strategy."""

    h_m: float
    h_c: float
    delta_h: float
    s_ds: float
    s: float
    strategy: str


def make_record(h_m, h_c, s_ds, strategy, s_a=0.5):
    return AnalysisRecord(
        h_m=h_m, h_c=h_c, delta_h=h_c - h_m, s_ds=s_ds,
        s=similarity_score(s_ds, s_a), strategy=strategy,
    )


def f_score(records, config=None):
    """Mean over records of w1 * S + w2 * dH."""
    if not records:
        raise ValueError("f_score needs at least one record")
    cfg = config or FScoreConfig()
    total = sum(cfg.w1 * r.s + cfg.w2 * r.delta_h for r in records)
    return total / len(records)


def default_feature_extractor(seed=0):
    """A small fixed-seed conv net returning flat post-ReLU features.

    Stands in for a pretrained deep model where none is available; any
    callable image -> flat non-negative vector can replace it. The final
    stage is kept spatial (flattened, not pooled): pooled features of an
    untrained net saturate the cosine near 1 for any pair of natural
    images, hiding layout damage done by a masking strategy.
    """
    import torch
    import torch.nn as nn

    g = torch.Generator().manual_seed(seed)
    layers = []
    cin = 3
    for cout in (32, 64, 128):
        conv = nn.Conv2d(cin, cout, 3, stride=2, padding=1, bias=False)
        with torch.no_grad():
            conv.weight.copy_(torch.randn(conv.weight.shape, generator=g) * 0.2)
        layers += [conv, nn.ReLU()]
        cin = cout
    net = nn.Sequential(*layers).eval()

    def extract(image):
        x = torch.as_tensor(np.asarray(image, dtype=np.float32)).unsqueeze(0)
        with torch.no_grad():
            feats = net(x)
        return feats.flatten().numpy()

    return extract

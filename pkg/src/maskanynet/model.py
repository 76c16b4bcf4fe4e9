"""Dual-branch model assembly.

One branch sees the masked image, the other the resized reuse image built
from the masked-out content. Both go through the backbone's low-level
extractor (shared by default), are concatenated along channels, refined by
a residual alignment block, and finished by the backbone's high-level
extractor. Fusion can instead happen at the image level (6-channel input,
one widened backbone) or the decision level (two full backbones, averaged
logits).

At eval time the branches see the deterministic 2x2-periodic grid mask and
its reuse complement, so inference is reproducible; training draws a fresh
seeded mask per sample.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn

from maskanynet import masking
from maskanynet.backbones import create_backbone, default_split_point, parameter_count
from maskanynet.errors import ConfigurationError, DimensionError
from maskanynet.reuse import compose_reuse, extract_regions, resize_to

FUSION_LEVELS = ("image", "feature", "decision")
EVAL_MASK_MODES = ("grid", "stochastic")

# Branch inputs are built with half-pixel-center bilinear resizing; recorded
# in every checkpoint so runs stay comparable.
RESIZE_SEMANTICS = {"mode": "bilinear", "align_corners": False}


@dataclass
class FusionConfig:
    level: str = "feature"
    align_depth: int = 3
    shared_low: bool = True

    def __post_init__(self):
        if self.level not in FUSION_LEVELS:
            raise ConfigurationError(f"fusion level {self.level!r} not in {FUSION_LEVELS}")
        if self.align_depth < 1:
            raise ConfigurationError("align_depth must be >= 1")


@dataclass
class MaskPolicy:
    """Masking + reuse settings used by the training/eval pipeline.

    ``mixed`` draws uniformly among patch/grid/random per sample;
    ``combined`` is the fair patch-or-grid coin.
    """

    strategy: str = "combined"
    ratio: float = 0.25
    block_size: int = masking.DEFAULT_BLOCK_SIZE
    size_range: tuple = (8, 16)
    fill: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in masking.STRATEGIES + ("mixed",):
            raise ConfigurationError(
                f"strategy {self.strategy!r} not in {masking.STRATEGIES + ('mixed',)}"
            )

    def sample_spec(self, dims, sub_seed):
        if self.strategy == "patch":
            return masking.generate_patch_mask(dims, self.block_size, self.ratio, sub_seed)
        if self.strategy == "grid":
            return masking.generate_grid_mask(dims, self.block_size, self.ratio)
        if self.strategy == "random":
            return masking.generate_random_mask(dims, self.ratio, sub_seed, self.size_range)
        if self.strategy == "combined":
            return masking.generate_combined_mask(dims, self.block_size, self.ratio, sub_seed)
        rng = np.random.default_rng(sub_seed)
        pick = int(rng.integers(0, 3))
        inner = int(rng.integers(0, 2**63))
        if pick == 0:
            return masking.generate_patch_mask(dims, self.block_size, self.ratio, inner)
        if pick == 1:
            return masking.generate_grid_mask(dims, self.block_size, self.ratio)
        return masking.generate_random_mask(dims, self.ratio, inner, self.size_range)


class BranchPipeline:
    """Turns an input batch into (masked, resized-reuse) branch arrays."""

    def __init__(self, policy):
        self.policy = policy
        self._rng = np.random.default_rng(policy.seed)
        self._eval_specs = {}

    def _eval_spec(self, dims):
        if dims not in self._eval_specs:
            self._eval_specs[dims] = masking.generate_grid_mask(
                dims, self.policy.block_size, 0.25
            )
        return self._eval_specs[dims]

    def specs(self, dims, n, training, eval_mask_mode="grid"):
        if training:
            return [
                self.policy.sample_spec(dims, int(self._rng.integers(0, 2**63)))
                for _ in range(n)
            ]
        if eval_mask_mode == "grid":
            return [self._eval_spec(dims)] * n
        rng = np.random.default_rng(self.policy.seed)
        return [self.policy.sample_spec(dims, int(rng.integers(0, 2**63))) for _ in range(n)]

    def build(self, x, training, eval_mask_mode="grid", reuse_branch=True):
        """x: (B,C,H,W) tensor. Returns (masked, reuse_resized) float tensors."""
        arr = np.ascontiguousarray(x.detach().cpu().numpy(), dtype=np.float32)
        b, _, h, w = arr.shape
        specs = self.specs((h, w), b, training, eval_mask_mode)
        masked = np.empty_like(arr)
        reused = np.empty_like(arr) if reuse_branch else None
        for i in range(b):
            img = arr[i]
            spec = specs[i]
            masked[i] = masking.apply_mask(img, spec, self.policy.fill).pixels
            if reuse_branch:
                patches = extract_regions(img, spec, snap_block_size=self.policy.block_size)
                stitched = compose_reuse(patches, self.policy.block_size)
                reused[i] = resize_to(stitched, (h, w))
        masked_t = torch.from_numpy(masked).to(x.device)
        reused_t = torch.from_numpy(reused).to(x.device) if reuse_branch else None
        return masked_t, reused_t


@dataclass
class BackboneSplit:
    """A backbone functionally decomposed at a named boundary."""

    backbone: nn.Module
    split_point: str
    channels_at_split: int
    low: callable = field(repr=False)
    high: callable = field(repr=False)
    boundary_module: nn.Module = field(repr=False, default=None)


def split_backbone(backbone, split_point):
    low, high, channels, boundary = backbone.split(split_point)
    return BackboneSplit(
        backbone=backbone,
        split_point=split_point,
        channels_at_split=channels,
        low=low,
        high=high,
        boundary_module=boundary,
    )


def fuse_features(f_masked, f_reuse):
    """Concatenate branch features along channels, masked branch first."""
    if f_masked.shape != f_reuse.shape:
        raise DimensionError(
            f"branch features differ in shape: {tuple(f_masked.shape)} vs {tuple(f_reuse.shape)}"
        )
    return torch.cat([f_masked, f_reuse], dim=-3)


def _group_norm(channels):
    groups = 8
    while channels % groups:
        groups //= 2
    return nn.GroupNorm(max(groups, 1), channels)


class AlignStage(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 3, padding=1, bias=False)
        self.norm = _group_norm(cout)
        self.res = nn.Conv2d(cin, cout, 1, bias=False) if cin != cout else nn.Identity()

    def forward(self, x):
        return torch.relu(self.norm(self.conv(x))) + self.res(x)


class AlignmentBlock(nn.Module):
    """n-stage residual refinement of the concatenated branch features.

    Stage 1 reduces 2C -> C with a 1x1 projection on its residual path;
    later stages are identity-residual. Normalization is batch-independent
    (GroupNorm) so eval results do not depend on batch composition.
    """

    def __init__(self, channels, depth=3):
        super().__init__()
        if depth < 1:
            raise ConfigurationError("alignment depth must be >= 1")
        stages = [AlignStage(2 * channels, channels)]
        stages += [AlignStage(channels, channels) for _ in range(depth - 1)]
        self.stages = nn.Sequential(*stages)

    def forward(self, joint):
        return self.stages(joint)


class ProjectionMerge(nn.Module):
    """Plain 1x1 channel mix, used when the alignment module is ablated."""

    def __init__(self, channels):
        super().__init__()
        self.proj = nn.Conv2d(2 * channels, channels, 1, bias=False)

    def forward(self, joint):
        return self.proj(joint)


class MaskAnyNet(nn.Module):
    def __init__(self, backbone_name, num_classes=10, fusion=None, policy=None,
                 split_point=None, use_alignment=True, eval_mask_mode="grid"):
        super().__init__()
        self.backbone_name = backbone_name
        self.num_classes = num_classes
        self.fusion = fusion or FusionConfig()
        self.policy = policy or MaskPolicy()
        self.use_alignment = use_alignment
        if eval_mask_mode not in EVAL_MASK_MODES:
            raise ConfigurationError(f"eval_mask_mode {eval_mask_mode!r} not in {EVAL_MASK_MODES}")
        self.eval_mask_mode = eval_mask_mode
        self.pipeline = BranchPipeline(self.policy)

        if self.fusion.level == "feature":
            self.backbone = create_backbone(backbone_name, num_classes)
            self.split_point = split_point or default_split_point(backbone_name)
            self.split = split_backbone(self.backbone, self.split_point)
            c = self.split.channels_at_split
            if not self.fusion.shared_low:
                self.backbone_aux = create_backbone(backbone_name, num_classes)
                self._aux_split = split_backbone(self.backbone_aux, self.split_point)
            if use_alignment:
                self.align = AlignmentBlock(c, self.fusion.align_depth)
            else:
                self.align = ProjectionMerge(c)
        elif self.fusion.level == "image":
            self.split_point = None
            self.backbone = create_backbone(backbone_name, num_classes, in_channels=6)
        else:  # decision
            self.split_point = None
            self.backbone = create_backbone(backbone_name, num_classes)
            self.backbone_b = create_backbone(backbone_name, num_classes)

    def branch_inputs(self, x):
        return self.pipeline.build(x, self.training, self.eval_mask_mode)

    def forward(self, x):
        single = x.dim() == 3
        if single:
            x = x.unsqueeze(0)
        masked, reused = self.branch_inputs(x)
        if self.fusion.level == "feature":
            f_m = self.split.low(masked)
            low_r = self.split.low if self.fusion.shared_low else self._aux_split.low
            f_r = low_r(reused)
            logits = self.split.high(self.align(fuse_features(f_m, f_r)))
        elif self.fusion.level == "image":
            logits = self.backbone(torch.cat([masked, reused], dim=1))
        else:
            logits = (self.backbone(masked) + self.backbone_b(reused)) / 2
        return logits.squeeze(0) if single else logits

    def parameter_ratio(self):
        baseline = create_backbone(self.backbone_name, self.num_classes)
        return parameter_count(self) / parameter_count(baseline)

    def config_record(self):
        return {
            "kind": "maskanynet",
            "backbone": self.backbone_name,
            "num_classes": self.num_classes,
            "split_point": self.split_point,
            "fusion": asdict(self.fusion),
            "policy": _policy_dict(self.policy),
            "use_alignment": self.use_alignment,
            "eval_mask_mode": self.eval_mask_mode,
            "resize": dict(RESIZE_SEMANTICS),
        }


class MaskedInputClassifier(nn.Module):
    """Single-branch ablation arm: the backbone sees only the masked image."""

    def __init__(self, backbone_name, num_classes=10, policy=None, eval_mask_mode="grid"):
        super().__init__()
        self.backbone_name = backbone_name
        self.num_classes = num_classes
        self.policy = policy or MaskPolicy()
        self.eval_mask_mode = eval_mask_mode
        self.pipeline = BranchPipeline(self.policy)
        self.backbone = create_backbone(backbone_name, num_classes)

    def forward(self, x):
        single = x.dim() == 3
        if single:
            x = x.unsqueeze(0)
        masked, _ = self.pipeline.build(x, self.training, self.eval_mask_mode, reuse_branch=False)
        logits = self.backbone(masked)
        return logits.squeeze(0) if single else logits

    def config_record(self):
        return {
            "kind": "masked_input",
            "backbone": self.backbone_name,
            "num_classes": self.num_classes,
            "policy": _policy_dict(self.policy),
            "eval_mask_mode": self.eval_mask_mode,
        }


class BaselineClassifier(nn.Module):
    """Plain backbone wrapper so every arm shares the checkpoint format."""

    def __init__(self, backbone_name, num_classes=10):
        super().__init__()
        self.backbone_name = backbone_name
        self.num_classes = num_classes
        self.backbone = create_backbone(backbone_name, num_classes)

    def forward(self, x):
        single = x.dim() == 3
        logits = self.backbone(x.unsqueeze(0) if single else x)
        return logits.squeeze(0) if single else logits

    def config_record(self):
        return {
            "kind": "baseline",
            "backbone": self.backbone_name,
            "num_classes": self.num_classes,
        }


def _policy_dict(policy):
    d = asdict(policy)
    d["size_range"] = list(d["size_range"])
    return d


def build_model(record):
    kind = record.get("kind")
    if kind not in ("baseline", "masked_input", "maskanynet"):
        raise ConfigurationError(f"unknown model kind {kind!r}")
    if kind == "baseline":
        return BaselineClassifier(record["backbone"], record["num_classes"])
    policy = MaskPolicy(**{**record["policy"], "size_range": tuple(record["policy"]["size_range"])})
    if kind == "masked_input":
        return MaskedInputClassifier(
            record["backbone"], record["num_classes"], policy,
            eval_mask_mode=record.get("eval_mask_mode", "grid"),
        )
    return MaskAnyNet(
        record["backbone"],
        record["num_classes"],
        fusion=FusionConfig(**record["fusion"]),
        policy=policy,
        split_point=record.get("split_point"),
        use_alignment=record.get("use_alignment", True),
        eval_mask_mode=record.get("eval_mask_mode", "grid"),
    )


def save_checkpoint(model, path, extra=None):
    torch.save(
        {
            "format_version": 1,
            "model_config": model.config_record(),
            "state_dict": model.state_dict(),
            "extra": extra or {},
        },
        path,
    )
    return path


def load_checkpoint(path):
    blob = torch.load(path, map_location="cpu", weights_only=False)
    model = build_model(blob["model_config"])
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, blob

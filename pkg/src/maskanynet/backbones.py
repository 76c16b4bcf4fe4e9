"""Small train-from-scratch backbones with named split boundaries.

Every backbone decomposes exactly into a low-level extractor (image ->
spatial feature map) and a high-level extractor (feature map -> logits) at
each registered split point; ``forward`` runs the identical op sequence,
so ``high(low(x))`` reproduces its logits to the bit.

Families and their boundaries:

* residual CNNs (``resnet_tiny``, ``resnet_small``) - after stem + stage1
* depthwise-separable CNN (``mobile_tiny``) - after the first two stages
* pyramid transformer (``pvit_tiny``) - after patch embedding + 2 blocks,
  with tokens kept as 2D maps at every stage boundary
"""

import torch
import torch.nn as nn

from maskanynet.errors import ConfigurationError


def _conv_bn(cin, cout, stride=1):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride, 1, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class BasicBlock(nn.Module):
    def __init__(self, cin, cout, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        if stride != 1 or cin != cout:
            self.down = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride, bias=False), nn.BatchNorm2d(cout)
            )
        else:
            self.down = nn.Identity()

    def forward(self, x):
        h = torch.relu(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        return torch.relu(h + self.down(x))


class ResNetBackbone(nn.Module):
    SPLIT_POINTS = ("stage1",)

    def __init__(self, widths=(32, 64, 128), blocks=(2, 2, 2), num_classes=10, in_channels=3):
        super().__init__()
        self.stem = _conv_bn(in_channels, widths[0])
        stages = []
        cin = widths[0]
        for i, w in enumerate(widths):
            layers = []
            for b in range(blocks[i]):
                layers.append(BasicBlock(cin, w, stride=2 if (b == 0 and i > 0) else 1))
                cin = w
            stages.append(nn.Sequential(*layers))
        self.stage1, self.stage2, self.stage3 = stages
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(widths[-1], num_classes)
        self._split_channels = {"stage1": widths[0]}

    def _classify(self, f):
        return self.fc(torch.flatten(self.pool(f), 1))

    def forward(self, x):
        f = self.stage1(self.stem(x))
        return self._classify(self.stage3(self.stage2(f)))

    def split(self, point):
        if point not in self.SPLIT_POINTS:
            raise ConfigurationError(
                f"unknown split point {point!r}; valid: {list(self.SPLIT_POINTS)}"
            )

        def low(x):
            return self.stage1(self.stem(x))

        def high(f):
            return self._classify(self.stage3(self.stage2(f)))

        return low, high, self._split_channels[point], self.stage1

    def cam_layer(self):
        return self.stage3


class DepthwiseBlock(nn.Module):
    def __init__(self, cin, cout, stride=1):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(cin, cin, 3, stride, 1, groups=cin, bias=False),
            nn.BatchNorm2d(cin),
            nn.ReLU(inplace=True),
            nn.Conv2d(cin, cout, 1, bias=False),
            nn.BatchNorm2d(cout),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.net(x)


class MobileBackbone(nn.Module):
    """Parameter-light depthwise-separable CNN; split after the two early stages."""

    SPLIT_POINTS = ("stage2",)

    def __init__(self, num_classes=10, in_channels=3):
        super().__init__()
        self.stem = _conv_bn(in_channels, 16)
        self.stage1 = DepthwiseBlock(16, 24)
        self.stage2 = DepthwiseBlock(24, 32)
        self.tail = nn.Sequential(
            DepthwiseBlock(32, 64, stride=2),
            DepthwiseBlock(64, 128),
            DepthwiseBlock(128, 256, stride=2),
            DepthwiseBlock(256, 512),
            DepthwiseBlock(512, 512),
        )
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(512, num_classes)
        self._split_channels = {"stage2": 32}

    def _classify(self, f):
        return self.fc(torch.flatten(self.pool(f), 1))

    def forward(self, x):
        f = self.stage2(self.stage1(self.stem(x)))
        return self._classify(self.tail(f))

    def split(self, point):
        if point not in self.SPLIT_POINTS:
            raise ConfigurationError(
                f"unknown split point {point!r}; valid: {list(self.SPLIT_POINTS)}"
            )

        def low(x):
            return self.stage2(self.stage1(self.stem(x)))

        def high(f):
            return self._classify(self.tail(f))

        return low, high, self._split_channels[point], self.stage2

    def cam_layer(self):
        return self.tail


class _Mlp(nn.Module):
    def __init__(self, dim, ratio=4.0):
        super().__init__()
        hidden = int(dim * ratio)
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(torch.nn.functional.gelu(self.fc1(x)))


class _Attention(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv.unbind(0)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        out = (attn.softmax(dim=-1) @ v).transpose(1, 2).reshape(b, n, d)
        return self.proj(out)


class TransformerBlock(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = _Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = _Mlp(dim)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class PvitStage(nn.Module):
    """Transformer blocks operating on a (B,C,H,W) map.

    Tokens are flattened row-major and reshaped back, so the stage keeps a
    spatial interface and positional information survives as token order.
    """

    def __init__(self, dim, depth, heads):
        super().__init__()
        self.blocks = nn.ModuleList(TransformerBlock(dim, heads) for _ in range(depth))

    def forward(self, x):
        b, c, h, w = x.shape
        t = x.flatten(2).transpose(1, 2)
        for blk in self.blocks:
            t = blk(t)
        return t.transpose(1, 2).reshape(b, c, h, w)


class PyramidViTBackbone(nn.Module):
    """Three-stage transformer pyramid with conv patch embedding/merging."""

    SPLIT_POINTS = ("stage1",)

    def __init__(self, dims=(48, 96, 192), depths=(2, 2, 2), heads=(2, 4, 8),
                 patch=4, num_classes=10, in_channels=3):
        super().__init__()
        self.embed = nn.Conv2d(in_channels, dims[0], patch, stride=patch)
        self.stage1 = PvitStage(dims[0], depths[0], heads[0])
        self.merge1 = nn.Conv2d(dims[0], dims[1], 2, stride=2)
        self.stage2 = PvitStage(dims[1], depths[1], heads[1])
        self.merge2 = nn.Conv2d(dims[1], dims[2], 2, stride=2)
        self.stage3 = PvitStage(dims[2], depths[2], heads[2])
        self.norm = nn.LayerNorm(dims[2])
        self.fc = nn.Linear(dims[2], num_classes)
        self._split_channels = {"stage1": dims[0]}

    def _classify(self, f):
        return self.fc(self.norm(f.mean(dim=(2, 3))))

    def forward(self, x):
        f = self.stage1(self.embed(x))
        f = self.stage3(self.merge2(self.stage2(self.merge1(f))))
        return self._classify(f)

    def split(self, point):
        if point not in self.SPLIT_POINTS:
            raise ConfigurationError(
                f"unknown split point {point!r}; valid: {list(self.SPLIT_POINTS)}"
            )

        def low(x):
            return self.stage1(self.embed(x))

        def high(f):
            f = self.stage3(self.merge2(self.stage2(self.merge1(f))))
            return self._classify(f)

        return low, high, self._split_channels[point], self.stage1

    def cam_layer(self):
        return self.stage3


BACKBONES = {
    "resnet_tiny": (ResNetBackbone, {"widths": (16, 32, 64)}),
    "resnet_small": (ResNetBackbone, {"widths": (32, 64, 128)}),
    "mobile_tiny": (MobileBackbone, {}),
    "pvit_tiny": (PyramidViTBackbone, {}),
}


def backbone_names():
    return tuple(BACKBONES)


def create_backbone(name, num_classes=10, in_channels=3):
    if name not in BACKBONES:
        raise ConfigurationError(f"unknown backbone {name!r}; valid: {list(BACKBONES)}")
    cls, kwargs = BACKBONES[name]
    return cls(num_classes=num_classes, in_channels=in_channels, **kwargs)


def default_split_point(name):
    if name not in BACKBONES:
        raise ConfigurationError(f"unknown backbone {name!r}; valid: {list(BACKBONES)}")
    return BACKBONES[name][0].SPLIT_POINTS[0]


def parameter_count(module):
    return sum(p.numel() for p in module.parameters())

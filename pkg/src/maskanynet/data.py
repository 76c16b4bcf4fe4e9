"""Dataset ingestion and generated corpora.

Two dataset ids are built in: ``cifar10`` (read from a local
``cifar-10-batches-py`` directory, never downloaded here) and
``synthetic`` (ten procedurally rendered shape/texture classes, fully
seeded, so training runs work on machines without the CIFAR archive).

``natural_corpus`` yields seeded crops of bundled photographs for the
masking-strategy analysis, which needs real image statistics.
"""

import os
import pickle
from dataclasses import dataclass

import numpy as np
import torch

from maskanynet import backend
from maskanynet.errors import ConfigurationError, IngestionError

CIFAR10_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR10_STD = (0.2470, 0.2435, 0.2616)
SYNTHETIC_MEAN = (0.5, 0.5, 0.5)
SYNTHETIC_STD = (0.25, 0.25, 0.25)

DATASETS = ("synthetic", "cifar10")


@dataclass
class DatasetBundle:
    name: str
    train_x: torch.Tensor  # normalized float32 (N,3,H,W)
    train_y: torch.Tensor
    val_x: torch.Tensor
    val_y: torch.Tensor
    num_classes: int
    mean: tuple
    std: tuple


def _normalize(x, mean, std):
    m = np.asarray(mean, dtype=np.float32).reshape(3, 1, 1)
    s = np.asarray(std, dtype=np.float32).reshape(3, 1, 1)
    return (x - m) / s


def synthetic_shapes(n, size=32, seed=0):
    """Render n seeded samples of 10 shape/texture classes in [0,1]^3.

    Class identity is carried by global structure (disks, frames, stripe
    orientation, ...), so partial occlusion leaves it recoverable.
    """
    rng = np.random.default_rng(seed)
    images = np.empty((n, 3, size, size), dtype=np.float32)
    labels = rng.integers(0, 10, size=n).astype(np.int64)
    base = np.linspace(-1.0, 1.0, size, dtype=np.float32)
    for i in range(n):
        cls = int(labels[i])
        cy, cx = rng.uniform(-0.25, 0.25, size=2)
        scale = rng.uniform(0.35, 0.7)
        yy = (base[:, None] - cy) / scale
        xx = (base[None, :] - cx) / scale
        rr = np.sqrt(yy * yy + xx * xx)
        freq = rng.uniform(2.0, 4.0)
        phase = rng.uniform(0.0, np.pi)
        if cls == 0:
            shape = rr <= 1.0
        elif cls == 1:
            shape = (rr <= 1.0) & (rr >= 0.55)
        elif cls == 2:
            shape = (np.abs(yy) <= 0.9) & (np.abs(xx) <= 0.9)
        elif cls == 3:
            outer = (np.abs(yy) <= 1.0) & (np.abs(xx) <= 1.0)
            shape = outer & ~((np.abs(yy) <= 0.55) & (np.abs(xx) <= 0.55))
        elif cls == 4:
            shape = (np.abs(yy) <= 0.3) | (np.abs(xx) <= 0.3)
        elif cls == 5:
            shape = np.sin(yy * freq * np.pi + phase) > 0
        elif cls == 6:
            shape = np.sin(xx * freq * np.pi + phase) > 0
        elif cls == 7:
            shape = np.sin((xx + yy) * freq * np.pi + phase) > 0
        elif cls == 8:
            shape = (np.sin(yy * freq * np.pi + phase) > 0) ^ (np.sin(xx * freq * np.pi + phase) > 0)
        else:
            shape = (yy >= -0.8) & (yy - np.abs(xx) * 1.6 <= 0.0) & (yy <= 0.8)
        fg = rng.uniform(0.55, 1.0, size=3).astype(np.float32)
        bg = rng.uniform(0.0, 0.4, size=3).astype(np.float32)
        img = np.where(shape[None, :, :], fg[:, None, None], bg[:, None, None])
        img += rng.normal(0.0, 0.05, size=img.shape).astype(np.float32)
        images[i] = np.clip(img, 0.0, 1.0)
    return images, labels


_PHOTO_NAMES = (
    "astronaut", "coffee", "chelsea", "rocket", "hubble_deep_field", "immunohistochemistry",
)


def natural_corpus(n=240, size=64, seed=0):
    """Seeded crops of bundled photographs, float32 (n,3,size,size) in [0,1]."""
    from skimage import data as skdata

    photos = []
    for name in _PHOTO_NAMES:
        arr = getattr(skdata, name)()
        photos.append(np.ascontiguousarray(arr.transpose(2, 0, 1), dtype=np.float32) / 255.0)
    rng = np.random.default_rng(seed)
    out = np.empty((n, 3, size, size), dtype=np.float32)
    for i in range(n):
        img = photos[i % len(photos)]
        _, h, w = img.shape
        win = int(rng.choice([size, int(size * 1.5), size * 2]))
        win = min(win, h, w)
        y = int(rng.integers(0, h - win + 1))
        x = int(rng.integers(0, w - win + 1))
        crop = np.ascontiguousarray(img[:, y : y + win, x : x + win])
        out[i] = crop if win == size else backend.resize_bilinear(crop, size, size)
    return out


def load_cifar10(root):
    """Read the python-pickle CIFAR-10 archive from disk.

    Returns dict with train/test uint8 images as float32 [0,1] arrays.
    """
    base = os.path.join(root, "cifar-10-batches-py")
    if not os.path.isdir(base):
        raise IngestionError(
            f"CIFAR-10 not found under {root!r}. Fetch it with:\n"
            "  curl -O https://www.cs.toronto.edu/~kriz/cifar-10-python.tar.gz\n"
            f"  tar -xzf cifar-10-python.tar.gz -C {root}\n"
            "then re-run with the same --data-dir."
        )

    def read_batch(name):
        with open(os.path.join(base, name), "rb") as fh:
            blob = pickle.load(fh, encoding="bytes")
        x = blob[b"data"].reshape(-1, 3, 32, 32).astype(np.float32) / 255.0
        y = np.asarray(blob[b"labels"], dtype=np.int64)
        return x, y

    xs, ys = zip(*(read_batch(f"data_batch_{i}") for i in range(1, 6)))
    test_x, test_y = read_batch("test_batch")
    return {
        "train_x": np.concatenate(xs),
        "train_y": np.concatenate(ys),
        "test_x": test_x,
        "test_y": test_y,
    }


def ingest(dataset, train_size, val_size, seed=0, data_dir=None):
    """Load a seeded train subset + val split, normalized, as torch tensors."""
    if dataset == "synthetic":
        train_x, train_y = synthetic_shapes(train_size, seed=seed)
        val_x, val_y = synthetic_shapes(val_size, seed=seed + 10_000)
        mean, std = SYNTHETIC_MEAN, SYNTHETIC_STD
    elif dataset == "cifar10":
        blob = load_cifar10(data_dir or os.environ.get("MASKANYNET_DATA_DIR", "./data"))
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(blob["train_x"]))[:train_size]
        train_x, train_y = blob["train_x"][order], blob["train_y"][order]
        val_x, val_y = blob["test_x"][:val_size], blob["test_y"][:val_size]
        mean, std = CIFAR10_MEAN, CIFAR10_STD
    else:
        raise ConfigurationError(f"unknown dataset {dataset!r}; valid: {list(DATASETS)}")
    return DatasetBundle(
        name=dataset,
        train_x=torch.from_numpy(_normalize(train_x, mean, std)),
        train_y=torch.from_numpy(np.asarray(train_y)),
        val_x=torch.from_numpy(_normalize(val_x, mean, std)),
        val_y=torch.from_numpy(np.asarray(val_y)),
        num_classes=10,
        mean=mean,
        std=std,
    )


def load_image_dir(path, size=64):
    """Load readable images from a directory as float32 [0,1] (3,size,size).

    Unreadable files are skipped and reported in the second return value.
    """
    from PIL import Image

    arrays, skipped = [], []
    for name in sorted(os.listdir(path)):
        full = os.path.join(path, name)
        if not os.path.isfile(full):
            continue
        try:
            with Image.open(full) as im:
                im = im.convert("RGB")
                short = min(im.size)
                scale = size / short
                im = im.resize((max(size, round(im.width * scale)),
                                max(size, round(im.height * scale))))
                left = (im.width - size) // 2
                top = (im.height - size) // 2
                im = im.crop((left, top, left + size, top + size))
                arrays.append(np.asarray(im, dtype=np.float32).transpose(2, 0, 1) / 255.0)
        except Exception:
            skipped.append(name)
    return arrays, skipped

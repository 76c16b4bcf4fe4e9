"""Desk-scale experiment engine.

Runs seeded training/evaluation of the baseline and its masked variants
under identical hyperparameters (the fairness rule: arms produced from one
config differ only in the mask/reuse/alignment path, provable by hashing
the config with the toggles excluded), plus the ablation sweeps over mask
ratio and strategy and the corpus-level masking analysis.

Artifacts: run records as JSON lines, sweep tables as CSV, checkpoints in
the model module's format.
"""

import csv
import hashlib
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch
import torch.nn.functional as F
import yaml

from maskanynet import masking, metrics
from maskanynet.backbones import parameter_count
from maskanynet.data import ingest, load_image_dir
from maskanynet.errors import ConfigurationError, ConsistencyError
from maskanynet.model import (
    BaselineClassifier,
    FusionConfig,
    MaskAnyNet,
    MaskedInputClassifier,
    MaskPolicy,
    load_checkpoint,
    save_checkpoint,
)
from maskanynet.reuse import compose_reuse, extract_regions, resize_to

STRATEGY_ARMS = (
    ("patch", "patch"),
    ("grid", "grid"),
    ("random", "random"),
    ("patch+grid", "combined"),
    ("patch+grid+random", "mixed"),
)


@dataclass
class ExperimentConfig:
    """Everything a run needs; every field lands in the run record."""

    schema_version: int = 1
    dataset: str = "synthetic"
    data_dir: str = None
    train_size: int = 2000
    val_size: int = 1000
    backbone: str = "resnet_tiny"
    fusion_level: str = "feature"
    align_depth: int = 3
    shared_low: bool = True
    strategy: str = "combined"
    ratio: float = 0.25
    block_size: int = 4  # 32 px inputs; use 16 for 64-224 px images
    size_range: tuple = (2, 6)
    fill: float = 0.0
    optimizer: str = "sgd"
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    schedule: str = "cosine"
    epochs: int = 20
    batch_size: int = 64
    seeds: tuple = (0, 1, 2)
    toggles: dict = field(default_factory=lambda: {"M": True, "R": True, "FFA": True})
    eval_mask_mode: str = "grid"
    latency_runs: int = 100

    def __post_init__(self):
        self.size_range = tuple(self.size_range)
        self.seeds = tuple(self.seeds)
        t = self.toggles
        missing = {"M", "R", "FFA"} - set(t)
        if missing:
            raise ConfigurationError(f"toggles missing {sorted(missing)}")
        if t["R"] and not t["M"]:
            raise ConfigurationError("toggle R requires M")
        if t["FFA"] and not t["R"]:
            raise ConfigurationError("toggle FFA requires R")
        if self.optimizer not in ("sgd", "adamw"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if self.schedule not in ("cosine", "constant"):
            raise ConfigurationError(f"unknown schedule {self.schedule!r}")

    def arm(self):
        t = self.toggles
        if not t["M"]:
            return "baseline"
        if not t["R"]:
            return "M"
        return "M+R+FFA" if t["FFA"] else "M+R"

    def to_dict(self):
        d = asdict(self)
        d["size_range"] = list(self.size_range)
        d["seeds"] = list(self.seeds)
        return d

    def hash(self, exclude=()):
        d = {k: v for k, v in self.to_dict().items() if k not in exclude}
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(
                f"unknown config keys {sorted(unknown)}; valid: {sorted(known)}"
            )
        return cls(**d)

    @classmethod
    def from_yaml(cls, path):
        with open(path) as fh:
            d = yaml.safe_load(fh) or {}
        if not isinstance(d, dict):
            raise ConfigurationError("config file must hold a mapping")
        return cls.from_dict(d)

    def save_yaml(self, path):
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)


def apply_overrides(config, overrides):
    """key=value strings -> a new config; values parsed as YAML scalars."""
    d = config.to_dict()
    applied = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        if key not in d:
            raise ConfigurationError(f"unknown config key {key!r}")
        value = yaml.safe_load(raw)
        if key == "toggles" and not isinstance(value, dict):
            raise ConfigurationError("toggles override must be a mapping")
        d[key] = value
        applied[key] = value
    return ExperimentConfig.from_dict(d), applied


@dataclass
class RunRecord:
    run_id: str
    arm: str
    seed: int
    config: dict
    config_hash: str
    base_hash: str  # config hash with the toggles excluded (fairness key)
    epochs: list
    final_top1: float
    final_top5: float
    latency_ms: float
    param_count: int
    checkpoint: str
    aborted: bool = False
    wall_seconds: float = 0.0

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def append_record(record, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    line = record.to_json() + "\n"
    # single write through an append-mode fd keeps concurrent writers whole
    with open(path, "a") as fh:
        fh.write(line)


def _policy_for(config, seed):
    return MaskPolicy(
        strategy=config.strategy,
        ratio=config.ratio,
        block_size=config.block_size,
        size_range=config.size_range,
        fill=config.fill,
        seed=seed,
    )


def build_arm_model(config, seed):
    t = config.toggles
    if not t["M"]:
        return BaselineClassifier(config.backbone, 10)
    if not t["R"]:
        return MaskedInputClassifier(
            config.backbone, 10, _policy_for(config, seed), eval_mask_mode=config.eval_mask_mode
        )
    fusion = FusionConfig(
        level=config.fusion_level,
        align_depth=config.align_depth,
        shared_low=config.shared_low,
    )
    return MaskAnyNet(
        config.backbone,
        10,
        fusion=fusion,
        policy=_policy_for(config, seed),
        use_alignment=t["FFA"],
        eval_mask_mode=config.eval_mask_mode,
    )


def _make_optimizer(config, model):
    if config.optimizer == "adamw":
        return torch.optim.AdamW(model.parameters(), lr=config.lr,
                                 weight_decay=config.weight_decay)
    return torch.optim.SGD(model.parameters(), lr=config.lr, momentum=config.momentum,
                           weight_decay=config.weight_decay)


def _epoch_lr(config, epoch):
    if config.schedule == "constant":
        return config.lr
    return config.lr * 0.5 * (1.0 + math.cos(math.pi * epoch / config.epochs))


def topk_accuracy(logits, targets, ks=(1, 5)):
    maxk = min(max(ks), logits.shape[1])
    _, pred = logits.topk(maxk, dim=1)
    correct = pred.eq(targets.unsqueeze(1))
    return {k: float(correct[:, : min(k, maxk)].any(dim=1).float().mean()) for k in ks}


@torch.no_grad()
def eval_split(model, x, y, batch_size=256):
    model.eval()
    hits1 = hits5 = 0
    for i in range(0, len(x), batch_size):
        logits = model(x[i : i + batch_size])
        acc = topk_accuracy(logits, y[i : i + batch_size])
        n = len(y[i : i + batch_size])
        hits1 += acc[1] * n
        hits5 += acc[5] * n
    return {"top1": hits1 / len(x), "top5": hits5 / len(x)}


@torch.no_grad()
def measure_latency(model, sample, runs=100, warmup=10):
    """Median per-image forward latency (ms) at batch size 1, warm."""
    model.eval()
    x = sample.unsqueeze(0)
    for _ in range(warmup):
        model(x)
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        model(x)
        times.append((time.perf_counter() - t0) * 1000.0)
    return float(np.median(times))


def _train_single(config, seed, out_dir, bundle):
    torch.manual_seed(seed)
    model = build_arm_model(config, seed)
    opt = _make_optimizer(config, model)
    x, y = bundle.train_x, bundle.train_y
    n = len(x)
    epoch_rows = []
    aborted = False
    t_start = time.time()
    for epoch in range(config.epochs):
        for g in opt.param_groups:
            g["lr"] = _epoch_lr(config, epoch)
        model.train()
        rng = np.random.default_rng((seed << 20) + epoch)
        order = rng.permutation(n)
        flips = rng.random(n) < 0.5
        loss_sum = hit_sum = seen = 0
        for i in range(0, n, config.batch_size):
            idx = order[i : i + config.batch_size]
            xb = x[idx]
            fb = torch.from_numpy(flips[idx])
            xb = torch.where(fb[:, None, None, None], xb.flip(-1), xb)
            yb = y[idx]
            opt.zero_grad(set_to_none=True)
            logits = model(xb)
            loss = F.cross_entropy(logits, yb)
            if not torch.isfinite(loss):
                aborted = True
                break
            loss.backward()
            opt.step()
            loss_sum += float(loss.detach()) * len(idx)
            hit_sum += float((logits.argmax(1) == yb).float().sum())
            seen += len(idx)
        if aborted:
            epoch_rows.append({"epoch": epoch, "status": "diverged"})
            break
        val = eval_split(model, bundle.val_x, bundle.val_y)
        epoch_rows.append(
            {
                "epoch": epoch,
                "train_loss": loss_sum / seen,
                "train_acc": hit_sum / seen,
                "val_top1": val["top1"],
                "val_top5": val["top5"],
            }
        )
    if aborted:
        final = {"top1": float("nan"), "top5": float("nan")}
        latency = float("nan")
    else:
        final = eval_split(model, bundle.val_x, bundle.val_y)
        latency = measure_latency(model, bundle.val_x[0], runs=config.latency_runs)
    run_id = f"{config.hash()}_{config.arm()}_s{seed}"
    ckpt = os.path.join(out_dir, f"{run_id}.pt")
    save_checkpoint(model, ckpt, extra={"config": config.to_dict(), "seed": seed})
    record = RunRecord(
        run_id=run_id,
        arm=config.arm(),
        seed=seed,
        config=config.to_dict(),
        config_hash=config.hash(),
        base_hash=config.hash(exclude=("toggles",)),
        epochs=epoch_rows,
        final_top1=final["top1"],
        final_top5=final["top5"],
        latency_ms=latency,
        param_count=parameter_count(model),
        checkpoint=ckpt,
        aborted=aborted,
        wall_seconds=time.time() - t_start,
    )
    append_record(record, os.path.join(out_dir, "runs.jsonl"))
    return record


def train(config, out_dir, bundle=None):
    """Train one arm for every seed in the config; records are persisted."""
    os.makedirs(out_dir, exist_ok=True)
    if bundle is None:
        bundle = ingest(config.dataset, config.train_size, config.val_size,
                        seed=0, data_dir=config.data_dir)
    return [_train_single(config, seed, out_dir, bundle) for seed in config.seeds]


def evaluate(checkpoint_path, dataset="synthetic", val_size=1000, data_dir=None,
             latency_runs=100, batch_size=256):
    """Deterministic eval of a checkpoint on a dataset's val split."""
    model, blob = load_checkpoint(checkpoint_path)
    bundle = ingest(dataset, 1, val_size, seed=0, data_dir=data_dir)
    if model.num_classes != bundle.num_classes:
        raise ConsistencyError(
            f"checkpoint has {model.num_classes} classes, dataset {dataset!r} "
            f"has {bundle.num_classes}"
        )
    out = eval_split(model, bundle.val_x, bundle.val_y, batch_size=batch_size)
    out["latency_ms"] = measure_latency(model, bundle.val_x[0], runs=latency_runs)
    out["param_count"] = parameter_count(model)
    out["checkpoint"] = checkpoint_path
    out["model_kind"] = blob["model_config"]["kind"]
    return out


def _ratio_supported(strategy, ratio):
    if not 0.0 < ratio <= 1.0:
        return False, f"ratio {ratio} outside (0, 1]"
    if strategy in ("grid", "combined", "mixed") and not masking.grid_ratio_supported(ratio):
        return False, f"ratio {ratio} is not 1/k^2, unsupported by grid masking"
    if strategy in ("random", "mixed") and ratio >= 1.0:
        return False, "random masking needs ratio < 1"
    return True, ""


def sweep_mask_ratio(config, ratios, out_dir):
    """One run set per ratio; unsupported ratios become warning rows."""
    if not ratios:
        raise ConfigurationError("ratio sweep needs at least one ratio")
    os.makedirs(out_dir, exist_ok=True)
    bundle = ingest(config.dataset, config.train_size, config.val_size,
                    seed=0, data_dir=config.data_dir)
    rows = []
    for ratio in ratios:
        ok, why = _ratio_supported(config.strategy, ratio)
        if not ok:
            rows.append({"ratio": ratio, "status": "skipped", "reason": why,
                         "top1_mean": "", "seeds": ""})
            continue
        cfg = replace(config, ratio=ratio)
        records = train(cfg, out_dir, bundle=bundle)
        top1 = [r.final_top1 for r in records]
        rows.append({
            "ratio": ratio, "status": "ok", "reason": "",
            "top1_mean": float(np.mean(top1)),
            "seeds": " ".join(str(s) for s in cfg.seeds),
        })
    path = os.path.join(out_dir, "ratio_sweep.csv")
    _write_csv(path, ["ratio", "status", "reason", "top1_mean", "seeds"], rows)
    _maybe_plot_ratio(rows, os.path.join(out_dir, "ratio_sweep.png"))
    return rows


def _maybe_plot_ratio(rows, path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return None
    done = [(r["ratio"], r["top1_mean"]) for r in rows if r["status"] == "ok"]
    if not done:
        return None
    xs, ys = zip(*sorted(done))
    plt.figure(figsize=(5, 3.5))
    plt.plot(xs, [y * 100 for y in ys], marker="o")
    plt.xlabel("mask area ratio")
    plt.ylabel("top-1 (%)")
    plt.grid(alpha=0.3)
    plt.tight_layout()
    plt.savefig(path, dpi=120)
    plt.close()
    return path


def sweep_strategy(config, out_dir):
    """Five strategy arms sharing every non-strategy hyperparameter."""
    os.makedirs(out_dir, exist_ok=True)
    bundle = ingest(config.dataset, config.train_size, config.val_size,
                    seed=0, data_dir=config.data_dir)
    shared_hash = config.hash(exclude=("strategy",))
    rows = []
    for label, strategy in STRATEGY_ARMS:
        cfg = replace(config, strategy=strategy)
        assert cfg.hash(exclude=("strategy",)) == shared_hash
        records = train(cfg, out_dir, bundle=bundle)
        top1 = [r.final_top1 for r in records]
        rows.append({
            "strategy": label, "top1_mean": float(np.mean(top1)),
            "top1_per_seed": " ".join(f"{t:.4f}" for t in top1),
            "seeds": " ".join(str(s) for s in cfg.seeds),
            "shared_hash": shared_hash,
        })
    path = os.path.join(out_dir, "strategy_sweep.csv")
    _write_csv(path, ["strategy", "top1_mean", "top1_per_seed", "seeds", "shared_hash"], rows)
    return rows


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    return path


@dataclass
class AnalysisOptions:
    size: int = 64
    block_size: int = 16
    ratio: float = 0.25
    size_range: tuple = (8, 16)
    fill: float = 0.0
    seed: int = 0
    s_a: float = 0.5
    w1: float = 0.5
    w2: float = 0.5
    pair_count: int = 1000


ANALYSIS_COLUMNS = ["row_type", "image", "strategy", "h_m", "h_c", "delta_h", "s_ds", "s", "f", "note"]


def _spec_for(strategy, dims, block, ratio, size_range, sub_seed):
    if strategy == "patch":
        return masking.generate_patch_mask(dims, block, ratio, sub_seed)
    if strategy == "grid":
        return masking.generate_grid_mask(dims, block, ratio)
    if strategy == "random":
        return masking.generate_random_mask(dims, ratio, sub_seed, size_range)
    if strategy == "combined":
        return masking.generate_combined_mask(dims, block, ratio, sub_seed)
    raise ConfigurationError(f"unknown analysis strategy {strategy!r}")


def analyze_corpus(images, strategies=("patch", "grid", "random"), options=None,
                   extractor=None, out_csv=None):
    """Per-image, per-strategy masking analysis records plus strategy scores.

    ``images`` is either a directory of image files or a float32
    (N,3,H,W) array in [0,1]. Returns (records, summary) and, with
    ``out_csv``, writes one record row per image/strategy followed by a
    summary block and ordering-check rows.
    """
    opts = options or AnalysisOptions()
    skipped = []
    if isinstance(images, str):
        arrays, skipped = load_image_dir(images, size=opts.size)
        if not arrays:
            raise ConfigurationError(f"no readable images under {images!r}")
        arr = np.stack(arrays)
    else:
        arr = np.asarray(images, dtype=np.float32)
    arr = arr[: opts.pair_count]
    if extractor is None:
        extractor = metrics.default_feature_extractor()
    f_cfg = metrics.FScoreConfig(w1=opts.w1, w2=opts.w2, s_a=opts.s_a,
                                 pair_count=opts.pair_count)
    rng = np.random.default_rng(opts.seed)
    dims = (arr.shape[2], arr.shape[3])
    records = {s: [] for s in strategies}
    rows = []
    for i in range(len(arr)):
        img = np.ascontiguousarray(arr[i])
        for strategy in strategies:
            sub_seed = int(rng.integers(0, 2**63))
            spec = _spec_for(strategy, dims, opts.block_size, opts.ratio,
                             opts.size_range, sub_seed)
            masked = masking.apply_mask(img, spec, opts.fill)
            patches = extract_regions(img, spec, snap_block_size=opts.block_size)
            stitched = compose_reuse(patches, opts.block_size)
            reuse_resized = resize_to(stitched, dims)
            h_m = metrics.shannon_entropy(masked.pixels)
            h_c = metrics.shannon_entropy(reuse_resized)
            s_ds = metrics.deep_similarity(img, reuse_resized, extractor)
            rec = metrics.make_record(h_m, h_c, s_ds, strategy, s_a=opts.s_a)
            records[strategy].append(rec)
            rows.append({
                "row_type": "record", "image": i, "strategy": strategy,
                "h_m": f"{rec.h_m:.6f}", "h_c": f"{rec.h_c:.6f}",
                "delta_h": f"{rec.delta_h:.6f}", "s_ds": f"{rec.s_ds:.6f}",
                "s": f"{rec.s:.6f}", "f": "", "note": "",
            })
    summary = {}
    for strategy in strategies:
        recs = records[strategy]
        summary[strategy] = {
            "h_m": float(np.mean([r.h_m for r in recs])),
            "h_c": float(np.mean([r.h_c for r in recs])),
            "delta_h": float(np.mean([r.delta_h for r in recs])),
            "s_ds": float(np.mean([r.s_ds for r in recs])),
            "s": float(np.mean([r.s for r in recs])),
            "f": metrics.f_score(recs, f_cfg),
        }
        m = summary[strategy]
        rows.append({
            "row_type": "summary", "image": "", "strategy": strategy,
            "h_m": f"{m['h_m']:.6f}", "h_c": f"{m['h_c']:.6f}",
            "delta_h": f"{m['delta_h']:.6f}", "s_ds": f"{m['s_ds']:.6f}",
            "s": f"{m['s']:.6f}", "f": f"{m['f']:.6f}", "note": "",
        })
    checks = {}
    if {"patch", "grid", "random"} <= set(strategies):
        checks["delta_h_random_lowest"] = (
            summary["random"]["delta_h"]
            < min(summary["patch"]["delta_h"], summary["grid"]["delta_h"])
        )
        checks["s_ds_grid_gt_patch_gt_random"] = (
            summary["grid"]["s_ds"] > summary["patch"]["s_ds"] > summary["random"]["s_ds"]
        )
        for name, ok in checks.items():
            rows.append({
                "row_type": "check", "image": "", "strategy": "", "h_m": "",
                "h_c": "", "delta_h": "", "s_ds": "", "s": "", "f": "",
                "note": f"{name}={'pass' if ok else 'fail'}",
            })
    summary["_checks"] = checks
    summary["_skipped_files"] = skipped
    if out_csv:
        os.makedirs(os.path.dirname(out_csv) or ".", exist_ok=True)
        _write_csv(out_csv, ANALYSIS_COLUMNS, rows)
    return records, summary

"""Command-line entry point.

Subcommands: mask-preview, train, eval, sweep-ratio, sweep-strategy,
analyze, heatmap. Every flag mirrors a config key, so a run is
reproducible from its recorded config; `--set key=value` overrides apply
after the config file loads and are stored in the run record. Exit codes:
0 success, 1 runtime failure, 2 bad configuration/usage.
"""

import argparse
import json
import os
import sys
import traceback

import numpy as np
import yaml

from maskanynet import masking
from maskanynet.errors import (
    ConfigurationError,
    MaskAnyNetError,
    RangeError,
    UnsupportedRatioError,
)
from maskanynet.harness import (
    AnalysisOptions,
    ExperimentConfig,
    analyze_corpus,
    apply_overrides,
    evaluate,
    sweep_mask_ratio,
    sweep_strategy,
    train,
)


def _emit(args, summary, lines):
    if args.json:
        print(json.dumps(summary, sort_keys=True, default=str))
    else:
        for line in lines:
            print(line)


def _load_config(args):
    cfg = ExperimentConfig.from_yaml(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.set:
        cfg, overrides = apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg, seed_over = apply_overrides(cfg, [f"seeds=[{args.seed}]"])
        overrides = {**overrides, **seed_over}
    return cfg, overrides


def _load_preview_image(args):
    size = args.size
    if args.image:
        from PIL import Image

        with Image.open(args.image) as im:
            im = im.convert("RGB").resize((size, size))
            return np.asarray(im, dtype=np.float32).transpose(2, 0, 1) / 255.0
    from maskanynet.data import natural_corpus

    return natural_corpus(1, size=size, seed=args.seed or 0)[0]


def cmd_mask_preview(args):
    from maskanynet.reuse import compose_reuse, export_reuse, extract_regions, resize_to, scatter_back

    img = np.ascontiguousarray(_load_preview_image(args))
    dims = (img.shape[1], img.shape[2])
    seed = args.seed or 0
    if args.strategy == "patch":
        spec = masking.generate_patch_mask(dims, args.block_size, args.ratio, seed)
    elif args.strategy == "grid":
        spec = masking.generate_grid_mask(dims, args.block_size, args.ratio)
    elif args.strategy == "random":
        spec = masking.generate_random_mask(dims, args.ratio, seed, (args.block_size // 2, args.block_size))
    else:
        spec = masking.generate_combined_mask(dims, args.block_size, args.ratio, seed)
    masked = masking.apply_mask(img, spec)
    patches = extract_regions(img, spec, snap_block_size=args.block_size)
    stitched = compose_reuse(patches, args.block_size)
    restored = scatter_back(stitched, spec, masked.pixels)
    exact = bool(np.array_equal(restored, img))

    os.makedirs(args.out, exist_ok=True)
    from PIL import Image

    def save(arr, name):
        path = os.path.join(args.out, name)
        Image.fromarray(np.rint(np.clip(arr, 0, 1) * 255).astype(np.uint8).transpose(1, 2, 0)).save(path)
        return path

    paths = {
        "original": save(img, "original.png"),
        "masked": save(masked.pixels, "masked.png"),
        "reuse_resized": save(resize_to(stitched, dims), "reuse_resized.png"),
    }
    reuse_png, reuse_meta = export_reuse(stitched, os.path.join(args.out, "reuse"))
    paths["reuse"] = reuse_png
    paths["reuse_meta"] = reuse_meta
    spec_path = os.path.join(args.out, "spec.json")
    with open(spec_path, "w") as fh:
        fh.write(spec.to_text())
    paths["spec"] = spec_path
    summary = {
        "strategy": spec.strategy,
        "coverage": spec.coverage(),
        "round_trip_exact": exact,
        "artifacts": paths,
    }
    _emit(args, summary, [f"round-trip exact: {exact}"] + [f"wrote {p}" for p in paths.values()])
    return 0 if exact else 1


def cmd_train(args):
    cfg, overrides = _load_config(args)
    records = train(cfg, args.out)
    lines = []
    for r in records:
        lines.append(
            f"run {r.run_id}: top1={r.final_top1:.4f} top5={r.final_top5:.4f} "
            f"params={r.param_count} latency={r.latency_ms:.2f}ms"
        )
        lines.append(f"wrote {r.checkpoint}")
    lines.append(f"wrote {os.path.join(args.out, 'runs.jsonl')}")
    summary = {
        "arm": cfg.arm(),
        "overrides": overrides,
        "records": [r.run_id for r in records],
        "top1_mean": float(np.mean([r.final_top1 for r in records])),
        "out": args.out,
    }
    _emit(args, summary, lines)
    return 0


def cmd_eval(args):
    out = evaluate(
        args.checkpoint,
        dataset=args.dataset,
        val_size=args.val_size,
        data_dir=args.data_dir,
        latency_runs=args.latency_runs,
    )
    _emit(args, out, [
        f"top1={out['top1']:.4f} top5={out['top5']:.4f} "
        f"latency={out['latency_ms']:.2f}ms params={out['param_count']}"
    ])
    return 0


def cmd_sweep_ratio(args):
    cfg, _ = _load_config(args)
    ratios = [float(r) for r in args.ratios.split(",") if r.strip()]
    rows = sweep_mask_ratio(cfg, ratios, args.out)
    ok_rows = [r for r in rows if r["status"] == "ok"]
    best = max(ok_rows, key=lambda r: r["top1_mean"]) if ok_rows else None
    lines = [f"ratio {r['ratio']}: {r['status']} {r.get('reason') or r['top1_mean']}" for r in rows]
    if best:
        lines.append(f"best ratio {best['ratio']} top1={best['top1_mean']:.4f}")
    lines.append(f"wrote {os.path.join(args.out, 'ratio_sweep.csv')}")
    _emit(args, {"rows": rows, "best": best}, lines)
    return 0


def cmd_sweep_strategy(args):
    cfg, _ = _load_config(args)
    rows = sweep_strategy(cfg, args.out)
    lines = [f"{r['strategy']}: top1={r['top1_mean']:.4f}" for r in rows]
    lines.append(f"wrote {os.path.join(args.out, 'strategy_sweep.csv')}")
    _emit(args, {"rows": rows}, lines)
    return 0


def cmd_analyze(args):
    opts = AnalysisOptions(size=args.size, block_size=args.block_size,
                           ratio=args.ratio, seed=args.seed or 0,
                           pair_count=args.pair_count)
    strategies = tuple(s.strip() for s in args.strategies.split(",") if s.strip())
    out_csv = os.path.join(args.out, "analysis.csv")
    if args.images:
        images = args.images
    else:
        from maskanynet.data import natural_corpus

        images = natural_corpus(args.pair_count, size=args.size, seed=opts.seed)
    _, summary = analyze_corpus(images, strategies=strategies, options=opts, out_csv=out_csv)
    lines = []
    for s in strategies:
        m = summary[s]
        lines.append(
            f"{s}: H_m={m['h_m']:.3f} H_c={m['h_c']:.3f} dH={m['delta_h']:.3f} "
            f"S_ds={m['s_ds']:.3f} F={m['f']:.3f}"
        )
    for name, ok in summary["_checks"].items():
        lines.append(f"check {name}: {'pass' if ok else 'fail'}")
    lines.append(f"wrote {out_csv}")
    clean = {k: v for k, v in summary.items() if not k.startswith("_")}
    clean["checks"] = summary["_checks"]
    clean["csv"] = out_csv
    _emit(args, clean, lines)
    return 0


def cmd_heatmap(args):
    from maskanynet.explain import grad_cam, save_comparison_grid, save_heatmap_overlay
    from maskanynet.model import load_checkpoint

    img = np.ascontiguousarray(_load_preview_image(args))
    model, _ = load_checkpoint(args.checkpoint)
    result = grad_cam(model, img, target_class=args.target_class, layer=args.layer)
    os.makedirs(args.out, exist_ok=True)
    overlay = os.path.join(args.out, "heatmap.png")
    save_heatmap_overlay(img, result, overlay)
    paths = {"overlay": overlay}
    if args.baseline_checkpoint:
        base_model, _ = load_checkpoint(args.baseline_checkpoint)
        base = grad_cam(base_model, img, target_class=args.target_class)
        grid = os.path.join(args.out, "comparison_grid.png")
        save_comparison_grid([img], [base], [result], grid)
        paths["grid"] = grid
    summary = {"target_class": result.target_class, "layer": result.layer, "artifacts": paths}
    _emit(args, summary, [f"target class {result.target_class} via {result.layer}"]
          + [f"wrote {p}" for p in paths.values()])
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="maskanynet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=False):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default="out")
        sp.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
        if config:
            sp.add_argument("--config", default=None, help="YAML experiment config")
            sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                            help="override a config key (repeatable)")

    sp = sub.add_parser("mask-preview", help="mask + reuse one image and verify the round trip")
    sp.add_argument("--image", default=None)
    sp.add_argument("--strategy", default="grid", choices=["patch", "grid", "random", "combined"])
    sp.add_argument("--ratio", type=float, default=masking.DEFAULT_RATIO)
    sp.add_argument("--block-size", type=int, default=masking.DEFAULT_BLOCK_SIZE)
    sp.add_argument("--size", type=int, default=64)
    common(sp)
    sp.set_defaults(func=cmd_mask_preview)

    sp = sub.add_parser("train", help="train one arm for every configured seed")
    common(sp, config=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint deterministically")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", default="synthetic")
    sp.add_argument("--val-size", type=int, default=1000)
    sp.add_argument("--data-dir", default=None)
    sp.add_argument("--latency-runs", type=int, default=100)
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sweep-ratio", help="accuracy vs mask ratio")
    sp.add_argument("--ratios", default="0.0625,0.1111111111,0.25,0.5")
    common(sp, config=True)
    sp.set_defaults(func=cmd_sweep_ratio)

    sp = sub.add_parser("sweep-strategy", help="accuracy per masking strategy")
    common(sp, config=True)
    sp.set_defaults(func=cmd_sweep_strategy)

    sp = sub.add_parser("analyze", help="entropy/similarity corpus report")
    sp.add_argument("--images", default=None, help="image directory (default: bundled photos)")
    sp.add_argument("--strategies", default="patch,grid,random")
    sp.add_argument("--size", type=int, default=64)
    sp.add_argument("--block-size", type=int, default=16)
    sp.add_argument("--ratio", type=float, default=masking.DEFAULT_RATIO)
    sp.add_argument("--pair-count", type=int, default=240)
    common(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("heatmap", help="Grad-CAM overlay for a checkpointed model")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--baseline-checkpoint", default=None)
    sp.add_argument("--image", default=None)
    sp.add_argument("--target-class", type=int, default=None)
    sp.add_argument("--layer", default=None)
    sp.add_argument("--size", type=int, default=64)
    common(sp)
    sp.set_defaults(func=cmd_heatmap)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, RangeError, UnsupportedRatioError,
            FileNotFoundError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MaskAnyNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())

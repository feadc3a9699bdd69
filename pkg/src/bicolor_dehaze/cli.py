"""Command-line entry point: synthesize / train / dehaze / evaluate.

Exit codes: 0 success, 1 validation error, 2 runtime abort. Every run writes
a manifest (subcommand, resolved config, seed, timestamps, outputs) into the
output directory.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch
import yaml

from . import __version__
from . import data as data_mod
from . import trainer as trainer_mod
from .backbone import AblationFlags, DualSpaceDehazeNet, ModelConfig
from .losses import LossWeights
from .trainer import ABLATION_PRESETS, TrainConfig, TrainingAborted

DATA_ROOT_ENV = "BICOLOR_DEHAZE_DATA_ROOT"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class ValidationError(ValueError):
    pass


def _write_manifest(out_dir, subcommand, config, seed, outputs, started):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = {k: v for k, v in config.items()
              if k not in ("func", "default_seed", "command")}
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "version": __version__,
        "started_unix": started,
        "finished_unix": time.time(),
        "outputs": [str(p) for p in outputs],
    }
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)


def _resolve_root(path_arg):
    root = path_arg or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise ValidationError(
            f"no dataset root given (pass --data-root or set {DATA_ROOT_ENV})")
    return Path(root)


def cmd_synthesize(args):
    clean_dir = Path(args.clean_dir)
    if not clean_dir.is_dir():
        raise ValidationError(f"clean image directory not found: {clean_dir}")
    sources = sorted(clean_dir.glob("*.png"))
    if not sources:
        raise ValidationError(f"no PNG files in {clean_dir}")
    out = Path(args.out)
    started = time.time()
    (out / "hazy").mkdir(parents=True, exist_ok=True)
    (out / "gt").mkdir(parents=True, exist_ok=True)

    outputs = []
    sidecar = {}
    stems = []
    for i in range(args.count):
        src = sources[i % len(sources)]
        clean = data_mod.load_image(src)
        params = data_mod.sample_asm_params([args.seed, i], *clean.shape[:2])
        hazy = data_mod.synthesize_haze(clean, params)
        stem = f"{src.stem}_{i:05d}"
        stems.append(stem)
        data_mod.save_image(out / "gt" / f"{stem}.png", clean)
        data_mod.save_image(out / "hazy" / f"{stem}.png", hazy)
        sidecar[stem] = {"beta": round(params.beta, 6),
                         "airlight": [round(v, 6) for v in params.airlight]}
        outputs += [out / "gt" / f"{stem}.png", out / "hazy" / f"{stem}.png"]

    n_train = int(round(len(stems) * (1.0 - args.val_fraction)))
    with open(out / data_mod.MANIFEST_NAME, "w") as f:
        f.write("train:\n")
        f.writelines(s + "\n" for s in stems[:n_train])
        f.write("val:\n")
        f.writelines(s + "\n" for s in stems[n_train:])
    with open(out / "asm_params.json", "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
    _write_manifest(out, "synthesize", vars(args), args.seed, outputs, started)
    print(f"wrote {len(stems)} pairs to {out}")
    return EXIT_OK


def _load_train_config(path, overrides):
    if not Path(path).is_file():
        raise ValidationError(f"config file not found: {path}")
    with open(path) as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict):
        raise ValidationError("config file must contain a mapping")

    errors = []
    known = {"data_root", "steps", "batch", "patch", "lr", "lr_schedule", "seed",
             "checkpoint_every", "grad_clip", "ablation", "model", "loss_weights"}
    for key in raw:
        if key not in known:
            errors.append(f"unknown config key '{key}'")

    ablation = raw.get("ablation", "full")
    if isinstance(ablation, str):
        if ablation not in ABLATION_PRESETS:
            errors.append(f"unknown ablation preset '{ablation}' "
                          f"(choose from {sorted(ABLATION_PRESETS)})")
            flags = AblationFlags()
        else:
            flags = ABLATION_PRESETS[ablation]
    else:
        try:
            flags = AblationFlags(**ablation)
        except (TypeError, ValueError) as e:
            errors.append(f"bad ablation flags: {e}")
            flags = AblationFlags()

    try:
        model_cfg = ModelConfig(**{
            **raw.get("model", {}),
            **({"blocks_per_stage": tuple(raw["model"]["blocks_per_stage"])}
               if "blocks_per_stage" in raw.get("model", {}) else {}),
        })
    except (TypeError, ValueError) as e:
        errors.append(f"bad model config: {e}")
        model_cfg = ModelConfig()

    try:
        weights = LossWeights(**raw.get("loss_weights", {}))
    except (TypeError, ValueError) as e:
        errors.append(f"bad loss weights: {e}")
        weights = LossWeights()

    cfg_fields = {f.name for f in dataclasses.fields(TrainConfig)} - {"ablation"}
    cfg_kwargs = {k: raw[k] for k in cfg_fields if k in raw}
    if overrides.seed is not None:
        cfg_kwargs["seed"] = overrides.seed
    try:
        train_cfg = TrainConfig(ablation=flags, **cfg_kwargs)
    except (TypeError, ValueError) as e:
        errors.append(f"bad training config: {e}")
        train_cfg = TrainConfig(ablation=flags)

    data_root = raw.get("data_root") or os.environ.get(DATA_ROOT_ENV)
    if not data_root:
        errors.append(f"config is missing 'data_root' (or set {DATA_ROOT_ENV})")
    elif not Path(data_root).is_dir():
        errors.append(f"dataset root does not exist: {data_root}")

    if errors:
        raise ValidationError("invalid training config:\n  " + "\n  ".join(errors))
    return Path(data_root), model_cfg, weights, train_cfg


def cmd_train(args):
    data_root, model_cfg, weights, train_cfg = _load_train_config(args.config, args)
    out = Path(args.out)
    started = time.time()
    train_pairs = data_mod.load_paired_dataset(data_root, "train")
    try:
        val_pairs = data_mod.load_paired_dataset(data_root, "val")
    except ValueError:
        val_pairs = []

    model = DualSpaceDehazeNet(model_cfg, train_cfg.ablation)
    resolved = {
        "data_root": str(data_root),
        "model": asdict(model_cfg),
        "loss_weights": asdict(weights),
        **{k: v for k, v in asdict(train_cfg).items()},
    }
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "resolved_config.yaml", "w") as f:
        yaml.safe_dump(resolved, f, sort_keys=True)

    trainer_mod.train(model, train_pairs, weights, train_cfg,
                      out_dir=out, val_pairs=val_pairs)
    _write_manifest(out, "train", resolved, train_cfg.seed,
                    sorted(out.glob("step_*.pt")), started)
    print(f"training finished; checkpoints in {out}")
    return EXIT_OK


def cmd_dehaze(args):
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.is_file():
        raise ValidationError(f"checkpoint not found: {ckpt_path}")
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        raise ValidationError(f"input directory not found: {in_dir}")
    inputs = sorted(in_dir.glob("*.png"))
    if not inputs:
        raise ValidationError(f"no PNG files in {in_dir}")
    try:
        model, _ = trainer_mod.load_checkpoint(ckpt_path)
    except ValueError as e:
        raise ValidationError(str(e))
    model.eval()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    outputs = []
    with torch.no_grad():
        for src in inputs:
            img = data_mod.load_image(src)
            tensor = torch.from_numpy(img).permute(2, 0, 1)[None]
            pred = model(tensor)[0][0].permute(1, 2, 0).numpy()
            dst = out / src.name
            data_mod.save_image(dst, pred)
            outputs.append(dst)
            if args.side_by_side:
                sheet = np.concatenate([img, pred], axis=1)
                sheet_path = out / f"{src.stem}_compare.png"
                data_mod.save_image(sheet_path, sheet)
                outputs.append(sheet_path)
    _write_manifest(out, "dehaze", vars(args), args.seed, outputs, started)
    print(f"dehazed {len(inputs)} images into {out}")
    return EXIT_OK


def cmd_evaluate(args):
    root = _resolve_root(args.data_root)
    if not root.is_dir():
        raise ValidationError(f"dataset root not found: {root}")
    pairs = data_mod.load_paired_dataset(root, args.split)
    started = time.time()

    if args.checkpoint is not None:
        ckpt_path = Path(args.checkpoint)
        if not ckpt_path.is_file():
            raise ValidationError(f"checkpoint not found: {ckpt_path}")
        try:
            model, payload = trainer_mod.load_checkpoint(ckpt_path)
        except ValueError as e:
            raise ValidationError(str(e))
        fingerprint = hashlib.sha256(
            json.dumps(payload["model_config"], sort_keys=True).encode()).hexdigest()[:12]
    else:
        model = None
        fingerprint = "identity"

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if model is not None:
        report, baseline = trainer_mod.evaluate_pairs(model, pairs)
        report.config_fingerprint = fingerprint
        baseline.config_fingerprint = "hazy-input"
        (out / "report.txt").write_text(report.render())
        (out / "report_hazy_baseline.txt").write_text(baseline.render())
        outputs = [out / "report.txt", out / "report_hazy_baseline.txt"]
        print(f"model: PSNR {report.mean_psnr:.2f} dB, SSIM {report.mean_ssim:.4f} "
              f"(hazy baseline: {baseline.mean_psnr:.2f} dB / {baseline.mean_ssim:.4f})")
    else:
        # No checkpoint: score the raw hazy inputs only.
        from . import metrics as metrics_mod
        baseline = metrics_mod.MetricsReport(config_fingerprint="hazy-input")
        for pair in pairs:
            hazy_np, clean_np = data_mod.validate_pair_dims(pair)
            hazy = torch.from_numpy(hazy_np).permute(2, 0, 1)[None]
            clean = torch.from_numpy(clean_np).permute(2, 0, 1)[None]
            baseline.add(pair.id, metrics_mod.psnr(hazy, clean),
                         metrics_mod.ssim_metric(hazy, clean))
        (out / "report_hazy_baseline.txt").write_text(baseline.render())
        outputs = [out / "report_hazy_baseline.txt"]
        print(f"hazy baseline: PSNR {baseline.mean_psnr:.2f} dB, SSIM {baseline.mean_ssim:.4f}")
    _write_manifest(out, "evaluate", vars(args), args.seed, outputs, started)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bicolor-dehaze",
        description="Dual color-space image dehazing: data synthesis, training, "
                    "inference and evaluation.")
    parser.add_argument("--seed", type=int, default=None, help="global random seed override")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="build a synthetic hazy/clean dataset tree")
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.set_defaults(func=cmd_synthesize, default_seed=0)

    p = sub.add_parser("train", help="train a model from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("dehaze", help="run a checkpoint over a directory of images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--side-by-side", action="store_true",
                   help="also write hazy|dehazed comparison sheets")
    p.set_defaults(func=cmd_dehaze, default_seed=0)

    p = sub.add_parser("evaluate", help="report PSNR/SSIM on a dataset split")
    p.add_argument("--checkpoint", default=None,
                   help="model checkpoint; omit to score the raw hazy inputs")
    p.add_argument("--data-root", default=None)
    p.add_argument("--split", default="val", choices=["train", "val"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate, default_seed=0)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None and hasattr(args, "default_seed"):
        args.seed = args.default_seed
    try:
        return args.func(args)
    except TrainingAborted as e:
        print(f"aborted: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValidationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

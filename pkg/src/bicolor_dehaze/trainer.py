"""Deterministic training loop with checkpointing and ablation presets."""

import json
import math
from dataclasses import dataclass, asdict, field
from pathlib import Path

import torch

from . import data as data_mod
from . import metrics as metrics_mod
from .backbone import AblationFlags, DualSpaceDehazeNet, ModelConfig
from .losses import LossWeights, multi_scale_targets, total_loss

__all__ = ["TrainConfig", "TrainingAborted", "train", "save_checkpoint",
           "load_checkpoint", "apply_ablation", "ABLATION_PRESETS"]

CHECKPOINT_SCHEMA_VERSION = 1

ABLATION_PRESETS = {
    "baseline": AblationFlags(use_bridge=False, use_phase_blend=False,
                              use_cross_attn=False, use_color_mod=False),
    "bridge": AblationFlags(use_bridge=True, use_phase_blend=True,
                            use_cross_attn=True, use_color_mod=False),
    "color": AblationFlags(use_bridge=False, use_phase_blend=False,
                           use_cross_attn=False, use_color_mod=True),
    "full": AblationFlags(),
}


class TrainingAborted(RuntimeError):
    def __init__(self, step, term, value):
        super().__init__(f"non-finite loss at step {step}: {term} = {value}")
        self.step = step
        self.term = term


@dataclass
class TrainConfig:
    steps: int = 5000
    batch: int = 4
    patch: int = 128
    lr: float = 1e-3
    lr_schedule: str = "cosine"  # or "constant"
    seed: int = 0
    checkpoint_every: int = 1000
    grad_clip: float = 1.0
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def __post_init__(self):
        if self.steps <= 0:
            raise ValueError("steps must be positive")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr schedule '{self.lr_schedule}'")
        if isinstance(self.ablation, dict):
            self.ablation = AblationFlags(**self.ablation)


def _lr_at(cfg, step):
    if cfg.lr_schedule == "constant":
        return cfg.lr
    # Cosine decay from lr down to lr / 100 over the run.
    lo = cfg.lr / 100.0
    t = step / max(cfg.steps - 1, 1)
    return lo + 0.5 * (cfg.lr - lo) * (1.0 + math.cos(math.pi * t))


def save_checkpoint(path, model, optimizer, step, train_cfg):
    payload = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "model_config": asdict(model.config),
        "ablation": asdict(model.ablation),
        "train_config": {**asdict(train_cfg), "ablation": asdict(train_cfg.ablation)},
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "step": step,
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_checkpoint(path):
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise ValueError(
            f"checkpoint schema version {version} unsupported "
            f"(expected {CHECKPOINT_SCHEMA_VERSION})")
    cfg = ModelConfig(**{**payload["model_config"],
                         "blocks_per_stage": tuple(payload["model_config"]["blocks_per_stage"])})
    flags = AblationFlags(**payload["ablation"])
    model = DualSpaceDehazeNet(cfg, flags)
    model.load_state_dict(payload["model_state"])
    return model, payload


def apply_ablation(model, flags: AblationFlags):
    """Rebuild the model with modules bypassed per `flags`, keeping every
    parameter that both variants share."""
    variant = DualSpaceDehazeNet(model.config, flags)
    source = model.state_dict()
    target = variant.state_dict()
    for name, value in source.items():
        if name in target and target[name].shape == value.shape:
            target[name] = value.clone()
    variant.load_state_dict(target)
    return variant


def evaluate_pairs(model, pairs, device="cpu"):
    """Mean PSNR/SSIM of the model and of the raw hazy inputs over a split."""
    model.eval()
    report = metrics_mod.MetricsReport()
    baseline = metrics_mod.MetricsReport()
    with torch.no_grad():
        for pair in pairs:
            hazy_np, clean_np = data_mod.validate_pair_dims(pair)
            hazy = torch.from_numpy(hazy_np).permute(2, 0, 1)[None].to(device)
            clean = torch.from_numpy(clean_np).permute(2, 0, 1)[None].to(device)
            pred = model(hazy)[0]
            report.add(pair.id, metrics_mod.psnr(pred, clean),
                       metrics_mod.ssim_metric(pred, clean))
            baseline.add(pair.id, metrics_mod.psnr(hazy, clean),
                         metrics_mod.ssim_metric(hazy, clean))
    model.train()
    return report, baseline


def train(model, pairs, loss_weights=None, cfg=None, out_dir=None,
          val_pairs=None, device="cpu", resume_optimizer=None, start_step=0,
          log_hook=None):
    """Optimize the model on random crops from `pairs`.

    Fully reproducible per seed: batch contents depend only on (seed, step).
    Writes a run log (one JSON record per step) and periodic checkpoints when
    `out_dir` is given. Aborts loudly on a non-finite loss."""
    cfg = cfg or TrainConfig()
    weights = loss_weights or LossWeights()
    if not pairs:
        raise ValueError("training set is empty")
    torch.manual_seed(cfg.seed)
    model.to(device).train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=0.0)
    if resume_optimizer is not None:
        optimizer.load_state_dict(resume_optimizer)

    out_dir = Path(out_dir) if out_dir is not None else None
    log_f = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_f = open(out_dir / "run.log", "a" if start_step else "w")

    cache = {}
    try:
        for step in range(start_step, cfg.steps):
            lr = _lr_at(cfg, step)
            for group in optimizer.param_groups:
                group["lr"] = lr
            hazy_np, clean_np = data_mod.make_training_batch(
                pairs, cfg.patch, cfg.batch, cfg.seed, step=step, cache=cache)
            hazy = torch.from_numpy(hazy_np).permute(0, 3, 1, 2).to(device)
            clean = torch.from_numpy(clean_np).permute(0, 3, 1, 2).to(device)

            preds = model(hazy)
            gts = multi_scale_targets(clean)
            loss, terms = total_loss(preds, gts, weights, return_terms=True)
            term_means = {
                "l1": sum(t[0] for t in terms).item(),
                "ssim": sum(t[1] for t in terms).item(),
                "fft": sum(t[2] for t in terms).item(),
            }
            for name, value in [("total", loss.item()), *term_means.items()]:
                if not math.isfinite(value):
                    raise TrainingAborted(step, name, value)

            optimizer.zero_grad()
            loss.backward()
            if cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            optimizer.step()

            record = {"step": step, "lr": round(lr, 10),
                      "loss": round(loss.item(), 8),
                      "l1": round(term_means["l1"], 8),
                      "ssim": round(term_means["ssim"], 8),
                      "fft": round(term_means["fft"], 8)}
            if log_f is not None:
                log_f.write(json.dumps(record) + "\n")
            if log_hook is not None:
                log_hook(record)

            is_last = step == cfg.steps - 1
            if out_dir is not None and (is_last or (step + 1) % cfg.checkpoint_every == 0):
                save_checkpoint(out_dir / f"step_{step + 1:07d}.pt",
                                model, optimizer, step + 1, cfg)
                if val_pairs:
                    report, baseline = evaluate_pairs(model, val_pairs, device)
                    with open(out_dir / "val.log", "a" if step + 1 > cfg.checkpoint_every else "w") as vf:
                        vf.write(json.dumps({
                            "step": step + 1,
                            "psnr": round(report.mean_psnr, 4),
                            "ssim": round(report.mean_ssim, 6),
                            "hazy_psnr": round(baseline.mean_psnr, 4),
                            "hazy_ssim": round(baseline.mean_ssim, 6),
                        }) + "\n")
    finally:
        if log_f is not None:
            log_f.close()
    return model, optimizer

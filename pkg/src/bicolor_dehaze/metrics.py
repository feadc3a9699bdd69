"""PSNR / SSIM evaluation metrics and the plain-text report format."""

import io
from dataclasses import dataclass, field

import torch

from .losses import ssim_map

__all__ = ["PSNR_SENTINEL", "psnr", "ssim_metric", "MetricsReport"]

# Returned (and flagged) when MSE is effectively zero.
PSNR_SENTINEL = 100.0


def psnr(pred, gt, peak=1.0):
    """Peak signal-to-noise ratio in dB; identical images return the
    (flagged) sentinel value instead of infinity."""
    if pred.shape != gt.shape:
        raise ValueError("shape mismatch")
    mse = ((pred - gt) ** 2).mean().item()
    if mse < 1e-12:
        return PSNR_SENTINEL
    return 10.0 * torch.log10(torch.tensor(peak ** 2 / mse)).item()


def ssim_metric(pred, gt):
    """Mean local SSIM, same window and stabilizers as the SSIM loss."""
    return ssim_map(pred, gt).mean().item()


@dataclass
class MetricsReport:
    """Per-image PSNR/SSIM records plus dataset means.

    FADE/NIQE slots exist for externally computed values only.
    """

    config_fingerprint: str = ""
    records: list = field(default_factory=list)  # (id, psnr, ssim)
    fade: float | None = None
    niqe: float | None = None

    def add(self, image_id, psnr_value, ssim_value):
        self.records.append((image_id, psnr_value, ssim_value))

    @property
    def count(self):
        return len(self.records)

    @property
    def mean_psnr(self):
        return sum(r[1] for r in self.records) / self.count

    @property
    def mean_ssim(self):
        return sum(r[2] for r in self.records) / self.count

    def render(self):
        """Fixed text layout; covered by a golden-file test."""
        if not self.records:
            raise ValueError("report has no records")
        out = io.StringIO()
        out.write("# per-image metrics\n")
        out.write("# id\tpsnr_db\tssim\tflags\n")
        for image_id, p, s in self.records:
            flag = "inf" if p >= PSNR_SENTINEL else "-"
            out.write(f"{image_id}\t{p:.4f}\t{s:.6f}\t{flag}\n")
        out.write("# summary\n")
        out.write(f"count\t{self.count}\n")
        out.write(f"mean_psnr_db\t{self.mean_psnr:.4f}\n")
        out.write(f"mean_ssim\t{self.mean_ssim:.6f}\n")
        if self.fade is not None:
            out.write(f"fade\t{self.fade:.4f}\n")
        if self.niqe is not None:
            out.write(f"niqe\t{self.niqe:.4f}\n")
        out.write(f"config\t{self.config_fingerprint}\n")
        return out.getvalue()

"""Multi-scale training objective: weighted L1 + SSIM + Fourier terms
evaluated at scales 1, 0.5 and 0.25.
"""

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

__all__ = ["LossWeights", "l1_loss", "ssim_loss", "fft_loss", "total_loss",
           "multi_scale_targets", "SSIM_WINDOW", "SSIM_SIGMA"]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
_C1 = 0.01 ** 2
_C2 = 0.03 ** 2

SCALES = (1.0, 0.5, 0.25)


@dataclass
class LossWeights:
    eta: float = 1.0      # L1
    theta: float = 0.5    # SSIM
    lam: float = 0.1      # Fourier

    def __post_init__(self):
        if min(self.eta, self.theta, self.lam) < 0:
            raise ValueError("loss weights must be non-negative")


def l1_loss(pred, gt):
    """Mean absolute error."""
    if pred.shape != gt.shape:
        raise ValueError("shape mismatch")
    return (pred - gt).abs().mean()


def _gaussian_window(channels, dtype, device):
    half = SSIM_WINDOW // 2
    coords = torch.arange(-half, half + 1, dtype=dtype, device=device)
    g = torch.exp(-coords ** 2 / (2 * SSIM_SIGMA ** 2))
    g = g / g.sum()
    window = g[:, None] @ g[None, :]
    return window.expand(channels, 1, SSIM_WINDOW, SSIM_WINDOW).contiguous()


def ssim_map(pred, gt):
    """Local SSIM map (valid windows only), 11x11 Gaussian, sigma 1.5."""
    if pred.shape != gt.shape:
        raise ValueError("shape mismatch")
    if pred.ndim == 3:
        pred, gt = pred.unsqueeze(0), gt.unsqueeze(0)
    if min(pred.shape[-2:]) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW} pixels on each side")
    c = pred.shape[1]
    win = _gaussian_window(c, pred.dtype, pred.device)
    mu1 = F.conv2d(pred, win, groups=c)
    mu2 = F.conv2d(gt, win, groups=c)
    mu1_sq, mu2_sq, mu12 = mu1 * mu1, mu2 * mu2, mu1 * mu2
    sigma1 = F.conv2d(pred * pred, win, groups=c) - mu1_sq
    sigma2 = F.conv2d(gt * gt, win, groups=c) - mu2_sq
    sigma12 = F.conv2d(pred * gt, win, groups=c) - mu12
    return ((2 * mu12 + _C1) * (2 * sigma12 + _C2)) / \
        ((mu1_sq + mu2_sq + _C1) * (sigma1 + sigma2 + _C2))


def ssim_loss(pred, gt):
    """1 - mean SSIM."""
    return 1.0 - ssim_map(pred, gt).mean()


def fft_loss(pred, gt):
    """Mean L1 distance between the half-packed complex spectra, taken over
    real and imaginary parts."""
    if pred.shape != gt.shape:
        raise ValueError("shape mismatch")
    diff = torch.fft.rfft2(pred) - torch.fft.rfft2(gt)
    return torch.view_as_real(diff).abs().mean()


def multi_scale_targets(gt):
    """Bilinear (anti-aliased) ground-truth pyramid at scales 1, 0.5, 0.25."""
    if gt.ndim == 3:
        gt = gt.unsqueeze(0)
    return [
        gt,
        F.interpolate(gt, scale_factor=0.5, mode="bilinear",
                      align_corners=False, antialias=True),
        F.interpolate(gt, scale_factor=0.25, mode="bilinear",
                      align_corners=False, antialias=True),
    ]


def total_loss(preds, gts, weights=None, return_terms=False):
    """Sum over the three scales of eta*L1 + theta*SSIM + lambda*FFT."""
    w = weights or LossWeights()
    if len(preds) != 3 or len(gts) != 3:
        raise ValueError("expected predictions and targets at 3 scales")
    total = None
    terms = []
    for pred, gt in zip(preds, gts):
        if pred.shape != gt.shape:
            raise ValueError("scale-set mismatch between predictions and targets")
        t_l1 = l1_loss(pred, gt)
        t_ssim = ssim_loss(pred, gt)
        t_fft = fft_loss(pred, gt)
        terms.append((t_l1, t_ssim, t_fft))
        contrib = w.eta * t_l1 + w.theta * t_ssim + w.lam * t_fft
        total = contrib if total is None else total + contrib
    if return_terms:
        return total, terms
    return total

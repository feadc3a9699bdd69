"""Encoder-decoder dehazing network with dual color-space branches.

A single large-kernel convolutional encoder is shared by the RGB and YCbCr
branches. Per-stage bridges let the YCbCr stream guide the RGB stream; the
decoder consumes the bridges' mixed features as residuals, applies the color
modulation block at full resolution, and emits predictions at scales
1 / 0.5 / 0.25 with a global hazy-input residual.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .bridge import BridgeBlock, ColorModulation
from .colorspace import rgb_to_ycbcr_tensor

__all__ = ["ModelConfig", "AblationFlags", "LargeKernelBlock", "DualSpaceDehazeNet", "count_params"]


@dataclass
class ModelConfig:
    base_channels: int = 24
    stages: int = 3
    blocks_per_stage: tuple = (2, 2, 4)
    attn_heads: int = 4
    large_kernel_size: int = 7

    def __post_init__(self):
        if self.stages != 3:
            raise ValueError("the three-scale loss requires exactly 3 stages")
        if self.base_channels % self.attn_heads != 0:
            raise ValueError("base_channels must be divisible by attn_heads")
        if len(self.blocks_per_stage) != self.stages:
            raise ValueError("blocks_per_stage must list one depth per stage")

    @property
    def stage_channels(self):
        return [self.base_channels * 2 ** i for i in range(self.stages)]


@dataclass
class AblationFlags:
    """Module toggles; disabling the bridge implies disabling its parts."""

    use_bridge: bool = True
    use_phase_blend: bool = True
    use_cross_attn: bool = True
    use_color_mod: bool = True

    def __post_init__(self):
        if not self.use_bridge and (self.use_phase_blend or self.use_cross_attn):
            raise ValueError("phase blend / cross attention require the bridge to be enabled")


class LargeKernelBlock(nn.Module):
    """Pre-norm residual block: depthwise large-kernel conv produces a gate
    that modulates the features before a pointwise projection."""

    def __init__(self, channels, kernel_size=7):
        super().__init__()
        self.norm = nn.GroupNorm(1, channels)
        self.dw = nn.Conv2d(channels, channels, kernel_size,
                            padding=kernel_size // 2, groups=channels)
        self.gate_proj = nn.Conv2d(channels, channels, 1)
        self.out_proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        h = self.norm(x)
        g = self.gate_proj(self.dw(h))
        return x + self.out_proj(h * g)


def _stage(channels, depth, kernel_size):
    return nn.Sequential(*[LargeKernelBlock(channels, kernel_size) for _ in range(depth)])


class DualSpaceDehazeNet(nn.Module):
    def __init__(self, config=None, ablation=None):
        super().__init__()
        self.config = config or ModelConfig()
        self.ablation = ablation or AblationFlags()
        cfg = self.config
        c1, c2, c3 = cfg.stage_channels
        k = cfg.large_kernel_size

        self.stem = nn.Conv2d(3, c1, 3, padding=1)
        self.enc1 = _stage(c1, cfg.blocks_per_stage[0], k)
        self.down1 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.enc2 = _stage(c2, cfg.blocks_per_stage[1], k)
        self.down2 = nn.Conv2d(c2, c3, 3, stride=2, padding=1)
        self.enc3 = _stage(c3, cfg.blocks_per_stage[2], k)

        if self.ablation.use_bridge:
            self.bridge1 = BridgeBlock(
                c1, c2, heads=cfg.attn_heads,
                use_phase_blend=self.ablation.use_phase_blend,
                use_cross_attn=self.ablation.use_cross_attn)
            self.bridge2 = BridgeBlock(
                c2, c3, heads=cfg.attn_heads,
                use_phase_blend=self.ablation.use_phase_blend,
                use_cross_attn=self.ablation.use_cross_attn)
        else:
            self.bridge1 = self.bridge2 = None

        # Asymmetric decoder: one block per stage vs the deeper encoder.
        self.dec3 = _stage(c3, 1, k)
        self.up3 = nn.ConvTranspose2d(c3, c2, 2, stride=2)
        self.dec2 = _stage(c2, 1, k)
        self.up2 = nn.ConvTranspose2d(c2, c1, 2, stride=2)
        self.dec1 = _stage(c1, 1, k)

        # Full-resolution YCbCr stream feeding the color block.
        self.ycbcr_proj = nn.Conv2d(c1, c1, 1)
        self.color_mod = ColorModulation(c1) if self.ablation.use_color_mod else None

        self.head_full = nn.Conv2d(c1, 3, 3, padding=1)
        self.head_half = nn.Conv2d(c2, 3, 3, padding=1)
        self.head_quarter = nn.Conv2d(c3, 3, 3, padding=1)

    def _encode_branch(self, x):
        f1 = self.enc1(self.stem(x))
        f2 = self.enc2(self.down1(f1))
        f3 = self.enc3(self.down2(f2))
        return f1, f2, f3

    def encode(self, img):
        """Run the shared encoder on one (B, 3, H, W) input; H, W must be
        divisible by 4 (use forward() for automatic padding)."""
        if img.shape[-2] < 8 or img.shape[-1] < 8:
            raise ValueError("inputs must be at least 8 x 8")
        if img.shape[-2] % 4 or img.shape[-1] % 4:
            raise ValueError("encode() requires H and W divisible by 4")
        return list(self._encode_branch(img))

    def forward(self, hazy):
        """Map a hazy (B, 3, H, W) RGB image in [0, 1] to predictions at
        scales 1, 0.5 and 0.25, all clamped to [0, 1]."""
        if hazy.ndim == 3:
            hazy = hazy.unsqueeze(0)
        h, w = hazy.shape[-2:]
        pad_h = (-h) % 4
        pad_w = (-w) % 4
        x = F.pad(hazy, (0, pad_w, 0, pad_h), mode="reflect") if (pad_h or pad_w) else hazy

        ycbcr = rgb_to_ycbcr_tensor(x)

        # Shared encoder, interleaved with the bridges so stage i's bridge can
        # gate the stage i+1 features of both branches.
        r1 = self.enc1(self.stem(x))
        y1 = self.enc1(self.stem(ycbcr))
        r2 = self.enc2(self.down1(r1))
        y2 = self.enc2(self.down1(y1))
        if self.bridge1 is not None:
            r2, y2, umix1 = self.bridge1(r1, y1, r2, y2)
        else:
            umix1 = None
        r3 = self.enc3(self.down2(r2))
        y3 = self.enc3(self.down2(y2))
        if self.bridge2 is not None:
            r3, y3, umix2 = self.bridge2(r2, y2, r3, y3)
        else:
            umix2 = None

        d3 = self.dec3(r3 + y3)
        if umix2 is not None:
            d3 = d3 + umix2
        d2 = self.dec2(self.up3(d3))
        if umix1 is not None:
            d2 = d2 + umix1
        d1 = self.dec1(self.up2(d2))

        y_stream = self.ycbcr_proj(y1)
        if self.color_mod is not None:
            d1 = self.color_mod(d1, y_stream)
        else:
            d1 = d1 + y_stream

        half_hazy = F.interpolate(x, scale_factor=0.5, mode="bilinear", align_corners=False)
        quarter_hazy = F.interpolate(x, scale_factor=0.25, mode="bilinear", align_corners=False)
        full = (self.head_full(d1) + x).clamp(0.0, 1.0)
        half = (self.head_half(d2) + half_hazy).clamp(0.0, 1.0)
        quarter = (self.head_quarter(d3) + quarter_hazy).clamp(0.0, 1.0)

        if pad_h or pad_w:
            full = full[..., :h, :w]
            half = half[..., : (h + 1) // 2, : (w + 1) // 2]
            quarter = quarter[..., : (h + 3) // 4, : (w + 3) // 4]
        return [full, half, quarter]


def count_params(model):
    """Total number of scalar parameters."""
    return sum(p.numel() for p in model.parameters())

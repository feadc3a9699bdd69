"""Cross color-space guidance blocks.

The per-stage bridge pools both branches, blends their phase spectra in the
frequency domain, runs bidirectional cross-attention over spatial tokens, and
gates the next encoder stage. A separate channel-modulation block lets the
YCbCr stream recolor the decoder output.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import spectral

__all__ = [
    "pool_split",
    "PhaseBlend",
    "CrossSpaceAttention",
    "StageGate",
    "ColorModulation",
    "BridgeBlock",
]


def pool_split(f_rgb, f_ycbcr):
    """Smooth the RGB branch with average pooling and sharpen the YCbCr branch
    with max pooling (kernel 3, stride 2, padding 1 -> spatially halved)."""
    if f_rgb.shape != f_ycbcr.shape:
        raise ValueError(f"shape mismatch: {tuple(f_rgb.shape)} vs {tuple(f_ycbcr.shape)}")
    f_a = F.avg_pool2d(f_rgb, kernel_size=3, stride=2, padding=1, count_include_pad=False)
    f_m = F.max_pool2d(f_ycbcr, kernel_size=3, stride=2, padding=1)
    return f_a, f_m


class PhaseBlend(nn.Module):
    """Blend the phase spectra of the two branches and rebuild each branch
    from its own (1x1-restored) amplitude plus the shared phase.

    Initialized so that with identical inputs the block is an identity map:
    phase convs start at 0.5 * dirac (the blend is the average of the two
    phases) and amplitude convs start at dirac.
    """

    def __init__(self, channels):
        super().__init__()
        self.phase_conv_rgb = nn.Conv2d(channels, channels, 3, padding=1)
        self.phase_conv_ycbcr = nn.Conv2d(channels, channels, 3, padding=1)
        self.amp_conv_rgb = nn.Conv2d(channels, channels, 1)
        self.amp_conv_ycbcr = nn.Conv2d(channels, channels, 1)
        for conv in (self.phase_conv_rgb, self.phase_conv_ycbcr):
            nn.init.dirac_(conv.weight)
            with torch.no_grad():
                conv.weight.mul_(0.5)
            nn.init.zeros_(conv.bias)
        for conv in (self.amp_conv_rgb, self.amp_conv_ycbcr):
            nn.init.dirac_(conv.weight)
            nn.init.zeros_(conv.bias)

    def forward(self, f_a, f_m):
        if f_a.shape != f_m.shape:
            raise ValueError("pooled branches must share a shape")
        shape = (f_a.shape[-2], f_a.shape[-1])
        rgb = spectral.decompose(f_a)
        ycbcr = spectral.decompose(f_m)
        phase_mix = self.phase_conv_ycbcr(ycbcr.phase) + self.phase_conv_rgb(rgb.phase)
        # abs keeps the restored amplitude valid (and the shared-phase property
        # intact) for arbitrary conv weights.
        amp_rgb = torch.abs(self.amp_conv_rgb(rgb.amplitude))
        amp_ycbcr = torch.abs(self.amp_conv_ycbcr(ycbcr.amplitude))
        out_rgb = spectral.recombine_raw(amp_rgb, phase_mix, shape)
        out_ycbcr = spectral.recombine_raw(amp_ycbcr, phase_mix, shape)
        return out_rgb, out_ycbcr


class CrossSpaceAttention(nn.Module):
    """Bidirectional cross-attention over spatial tokens plus a shared FFN.

    Each branch queries the other branch's keys/values; residual connections
    wrap both the attention and the FFN.
    """

    def __init__(self, channels, heads=4, ffn_expansion=2):
        super().__init__()
        if channels % heads != 0:
            raise ValueError(f"channels ({channels}) must be divisible by heads ({heads})")
        self.heads = heads
        self.head_dim = channels // heads
        self.qkv_rgb = nn.Linear(channels, channels * 3)
        self.qkv_ycbcr = nn.Linear(channels, channels * 3)
        self.out_rgb = nn.Linear(channels, channels)
        self.out_ycbcr = nn.Linear(channels, channels)
        self.ffn = nn.Sequential(
            nn.Linear(channels, channels * ffn_expansion),
            nn.GELU(),
            nn.Linear(channels * ffn_expansion, channels),
        )

    def _split(self, x):
        b, n, c = x.shape
        return x.view(b, n, self.heads, self.head_dim).transpose(1, 2)

    def _attend(self, q, k, v):
        scores = q @ k.transpose(-2, -1) / self.head_dim ** 0.5
        weights = torch.softmax(scores, dim=-1)
        return weights @ v, weights

    def forward(self, f_rgb, f_ycbcr, return_weights=False):
        if f_rgb.shape != f_ycbcr.shape:
            raise ValueError("branches must share a shape")
        b, c, h, w = f_rgb.shape
        xr = f_rgb.flatten(2).transpose(1, 2)
        xy = f_ycbcr.flatten(2).transpose(1, 2)
        qr, kr, vr = self.qkv_rgb(xr).chunk(3, dim=-1)
        qy, ky, vy = self.qkv_ycbcr(xy).chunk(3, dim=-1)
        ar, wr = self._attend(self._split(qr), self._split(ky), self._split(vy))
        ay, wy = self._attend(self._split(qy), self._split(kr), self._split(vr))
        ar = ar.transpose(1, 2).reshape(b, h * w, c)
        ay = ay.transpose(1, 2).reshape(b, h * w, c)
        xr = xr + self.out_rgb(ar)
        xy = xy + self.out_ycbcr(ay)
        xr = xr + self.ffn(xr)
        xy = xy + self.ffn(xy)
        out_rgb = xr.transpose(1, 2).view(b, c, h, w)
        out_ycbcr = xy.transpose(1, 2).view(b, c, h, w)
        if return_weights:
            return out_rgb, out_ycbcr, (wr, wy)
        return out_rgb, out_ycbcr


class StageGate(nn.Module):
    """Align the refined bridge features to the next stage's shape, gate that
    stage through a sigmoid, and keep the summed alignment as a decoder
    residual."""

    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.proj_rgb = nn.Conv2d(in_channels, out_channels, 1)
        self.proj_ycbcr = nn.Conv2d(in_channels, out_channels, 1)

    def _up(self, x, proj, size):
        if x.shape[-2:] != size:
            x = F.interpolate(x, size=size, mode="bilinear", align_corners=False)
        return proj(x)

    def forward(self, ft_rgb, ft_ycbcr, f_rgb_next, f_ycbcr_next):
        if f_rgb_next.shape != f_ycbcr_next.shape:
            raise ValueError("next-stage branches must share a shape")
        if ft_rgb.shape[1] != self.proj_rgb.in_channels:
            raise ValueError(
                f"expected {self.proj_rgb.in_channels} channels, got {ft_rgb.shape[1]}")
        size = f_rgb_next.shape[-2:]
        u_r = self._up(ft_rgb, self.proj_rgb, size)
        u_y = self._up(ft_ycbcr, self.proj_ycbcr, size)
        gated_rgb = torch.sigmoid(u_r) * f_rgb_next
        gated_ycbcr = torch.sigmoid(u_y) * f_ycbcr_next
        return gated_rgb, gated_ycbcr, u_r + u_y


class ColorModulation(nn.Module):
    """Turn channel-mean-centered YCbCr features into a softmax channel weight
    and use it to modulate the RGB features (YCbCr added back residually)."""

    def __init__(self, channels):
        super().__init__()
        self.project = nn.Linear(channels, channels)
        nn.init.zeros_(self.project.bias)

    def forward(self, f_rgb, f_ycbcr):
        if f_rgb.shape != f_ycbcr.shape:
            raise ValueError("inputs must share a shape")
        centered = f_ycbcr - f_ycbcr.mean(dim=1, keepdim=True)
        pooled = centered.mean(dim=(-2, -1))
        v = torch.softmax(self.project(pooled), dim=-1)
        return v[:, :, None, None] * f_rgb + f_ycbcr


class BridgeBlock(nn.Module):
    """One encoder-stage bridge: pool split -> phase blend -> cross attention,
    then gating of the next stage. Phase blend and attention can be bypassed
    for ablations."""

    def __init__(self, channels, next_channels, heads=4,
                 use_phase_blend=True, use_cross_attn=True):
        super().__init__()
        self.use_phase_blend = use_phase_blend
        self.use_cross_attn = use_cross_attn
        self.phase_blend = PhaseBlend(channels) if use_phase_blend else None
        self.cross_attn = CrossSpaceAttention(channels, heads=heads) if use_cross_attn else None
        self.gate = StageGate(channels, next_channels)

    def forward(self, f_rgb, f_ycbcr, f_rgb_next, f_ycbcr_next):
        f_a, f_m = pool_split(f_rgb, f_ycbcr)
        if self.phase_blend is not None:
            fb_rgb, fb_ycbcr = self.phase_blend(f_a, f_m)
        else:
            fb_rgb, fb_ycbcr = f_a, f_m
        if self.cross_attn is not None:
            ft_rgb, ft_ycbcr = self.cross_attn(fb_rgb, fb_ycbcr)
        else:
            ft_rgb, ft_ycbcr = fb_rgb, fb_ycbcr
        return self.gate(ft_rgb, ft_ycbcr, f_rgb_next, f_ycbcr_next)

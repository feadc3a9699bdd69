"""RGB <-> YCbCr conversion (BT.601 full range, normalized to [0, 1]).

All conversions run in floating point on normalized values; no 8-bit
quantization happens anywhere in the pipeline. Chroma channels are stored
with a 0.5 offset so neutral colors map to (y, 0.5, 0.5).
"""

from dataclasses import dataclass
from enum import Enum

import torch

__all__ = [
    "ColorSpace",
    "Image",
    "rgb_to_ycbcr",
    "ycbcr_to_rgb",
    "rgb_to_ycbcr_tensor",
    "ycbcr_to_rgb_tensor",
]


class ColorSpace(Enum):
    RGB = "rgb"
    YCBCR = "ycbcr"


# BT.601 full-range forward matrix, rows = (Y, Cb, Cr).
_FWD = torch.tensor([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
], dtype=torch.float64)

_INV = torch.linalg.inv(_FWD)

_CHROMA_OFFSET = torch.tensor([0.0, 0.5, 0.5], dtype=torch.float64)


@dataclass
class Image:
    """A single picture: H x W x 3 tensor in [0, 1] plus its color space tag."""

    pixels: torch.Tensor
    space: ColorSpace = ColorSpace.RGB

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[-1] != 3:
            raise ValueError(f"expected H x W x 3 pixels, got {tuple(self.pixels.shape)}")
        if self.pixels.shape[0] < 8 or self.pixels.shape[1] < 8:
            raise ValueError("images must be at least 8 x 8")
        if not torch.isfinite(self.pixels).all():
            raise ValueError("pixels contain NaN or Inf")


def _convert(x, matrix, offset_in, offset_out):
    """Apply a 3x3 color matrix along the channel axis (dim -3) of a tensor."""
    if x.shape[-3] != 3:
        raise ValueError(f"expected 3 channels at dim -3, got shape {tuple(x.shape)}")
    if not torch.isfinite(x).all():
        raise ValueError("input contains NaN or Inf")
    m = matrix.to(dtype=x.dtype, device=x.device)
    oi = offset_in.to(dtype=x.dtype, device=x.device).view(3, 1, 1)
    oo = offset_out.to(dtype=x.dtype, device=x.device).view(3, 1, 1)
    y = torch.einsum("oc,...chw->...ohw", m, x - oi) + oo
    return y


def rgb_to_ycbcr_tensor(x):
    """Convert a (..., 3, H, W) RGB tensor in [0, 1] to YCbCr.

    Differentiable and linear; no clamping is applied so the network can feed
    converted features directly.
    """
    zero = torch.zeros(3, dtype=torch.float64)
    return _convert(x, _FWD, zero, _CHROMA_OFFSET)


def ycbcr_to_rgb_tensor(x):
    """Inverse of :func:`rgb_to_ycbcr_tensor`; no clamping."""
    zero = torch.zeros(3, dtype=torch.float64)
    return _convert(x, _INV, _CHROMA_OFFSET, zero)


def rgb_to_ycbcr(img: Image) -> Image:
    """Convert a tagged RGB image to YCbCr. Y stays in [0, 1]; Cb/Cr carry a
    0.5 offset so gray inputs land exactly on (y, 0.5, 0.5)."""
    if img.space is not ColorSpace.RGB:
        raise ValueError(f"expected an RGB-tagged image, got {img.space}")
    chw = img.pixels.permute(2, 0, 1)
    out = rgb_to_ycbcr_tensor(chw).clamp(0.0, 1.0)
    return Image(out.permute(1, 2, 0), ColorSpace.YCBCR)


def ycbcr_to_rgb(img: Image) -> Image:
    """Convert a tagged YCbCr image back to RGB, clamped to [0, 1]."""
    if img.space is not ColorSpace.YCBCR:
        raise ValueError(f"expected a YCbCr-tagged image, got {img.space}")
    chw = img.pixels.permute(2, 0, 1)
    out = ycbcr_to_rgb_tensor(chw).clamp(0.0, 1.0)
    return Image(out.permute(1, 2, 0), ColorSpace.RGB)

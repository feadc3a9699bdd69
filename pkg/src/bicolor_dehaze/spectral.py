"""Differentiable 2-D FFT amplitude/phase decomposition and recombination.

Uses the real-input FFT with Hermitian-packed half spectrum (last axis has
floor(W/2)+1 bins). Normalization is the unnormalized forward / 1/(H*W)
inverse convention, so a constant field c has DC amplitude c*H*W.
"""

from dataclasses import dataclass

import torch

__all__ = ["SpectralPair", "decompose", "recombine"]


@dataclass
class SpectralPair:
    """Per-channel amplitude and phase of a real 2-D spectrum."""

    amplitude: torch.Tensor  # (..., H, Wf), >= 0
    phase: torch.Tensor      # (..., H, Wf), in (-pi, pi]
    spatial_shape: tuple     # (H, W) of the originating feature


def decompose(feature):
    """Split a real (..., H, W) tensor into amplitude and phase spectra."""
    if not torch.isfinite(feature).all():
        raise ValueError("input contains NaN or Inf")
    spec = torch.fft.rfft2(feature)
    return SpectralPair(
        amplitude=torch.abs(spec),
        phase=torch.angle(spec),
        spatial_shape=(feature.shape[-2], feature.shape[-1]),
    )


def recombine(pair: SpectralPair):
    """Inverse transform amplitude * exp(i * phase) back to a real tensor of
    the recorded spatial shape."""
    if (pair.amplitude < 0).any():
        raise ValueError("amplitude must be non-negative")
    return recombine_raw(pair.amplitude, pair.phase, pair.spatial_shape)


def recombine_raw(amplitude, phase, spatial_shape):
    """Unchecked recombination; amplitude may carry sign (phase flips by pi)."""
    spec = torch.polar(amplitude, phase)
    return torch.fft.irfft2(spec, s=spatial_shape)

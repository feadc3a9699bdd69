"""Paired-dataset ingestion and atmospheric-scattering haze synthesis.

Dataset layout: root/hazy/<stem>.png, root/gt/<stem>.png plus a plain-text
split manifest (splits.txt) with "train:" / "val:" section headers and one
stem per line. PNG inputs may be 8- or 16-bit; both are normalized to [0, 1]
by their own peak.
"""

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

__all__ = [
    "AsmParams", "HazePair", "synthesize_haze", "sample_asm_params",
    "load_paired_dataset", "make_training_batch", "load_image", "save_image",
]

MANIFEST_NAME = "splits.txt"


@dataclass
class AsmParams:
    """Scattering-model parameters: I = J * t + A * (1 - t), t = exp(-beta * d)."""

    beta: float
    airlight: np.ndarray  # (3,) in [0.7, 1.0]
    depth: np.ndarray     # (H, W), >= 0, relative units

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if (self.depth < 0).any() or not np.isfinite(self.depth).all():
            raise ValueError("depth must be finite and non-negative")


@dataclass
class HazePair:
    hazy_path: Path
    clean_path: Path
    id: str
    source: str = "real"

    def load(self):
        hazy = load_image(self.hazy_path)
        clean = load_image(self.clean_path)
        return hazy, clean


def synthesize_haze(clean, params: AsmParams):
    """Apply the scattering model to a clean (H, W, 3) image in [0, 1].

    The transmission map is shared across channels; output is clamped."""
    t = np.exp(-params.beta * params.depth)[..., None]
    hazy = clean * t + params.airlight[None, None, :] * (1.0 - t)
    return np.clip(hazy, 0.0, 1.0).astype(np.float32)


def sample_asm_params(seed, height, width):
    """Deterministically draw scattering parameters for one image.

    beta ~ U[0.4, 2.0]; per-channel airlight ~ U[0.7, 1.0]; depth is a smooth
    low-frequency random field min-max scaled to [0.5, 3.0]."""
    rng = np.random.default_rng(seed)
    beta = rng.uniform(0.4, 2.0)
    airlight = rng.uniform(0.7, 1.0, size=3)
    coarse = rng.standard_normal((6, 6))
    depth = cv2.resize(coarse, (width, height), interpolation=cv2.INTER_CUBIC)
    lo, hi = depth.min(), depth.max()
    depth = (depth - lo) / max(hi - lo, 1e-12)
    depth = 0.5 + 2.5 * depth
    return AsmParams(beta=float(beta), airlight=airlight.astype(np.float64),
                     depth=depth.astype(np.float64))


def load_image(path):
    """Read a PNG as float32 RGB in [0, 1]; 16-bit files are normalized by
    their own peak value."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ValueError(f"unreadable image: {path}")
    if raw.ndim == 2:
        raw = cv2.cvtColor(raw, cv2.COLOR_GRAY2BGR)
    if raw.shape[2] == 4:
        raw = raw[:, :, :3]
    peak = 65535.0 if raw.dtype == np.uint16 else 255.0
    img = raw.astype(np.float32) / peak
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)


def save_image(path, img):
    """Write an (H, W, 3) RGB float image in [0, 1] as 8-bit PNG, atomically."""
    path = Path(path)
    bgr = cv2.cvtColor(np.clip(img, 0.0, 1.0).astype(np.float32), cv2.COLOR_RGB2BGR)
    data = np.round(bgr * 255.0).astype(np.uint8)
    tmp = path.with_name(path.name + ".tmp.png")
    if not cv2.imwrite(str(tmp), data):
        raise ValueError(f"failed to write {path}")
    os.replace(tmp, path)


_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _png_size(path):
    """(height, width) from the PNG header, without decoding the pixels."""
    with open(path, "rb") as f:
        head = f.read(24)
    if len(head) < 24 or not head.startswith(_PNG_SIGNATURE):
        raise ValueError(f"not a PNG file: {path}")
    width, height = struct.unpack(">II", head[16:24])
    return height, width


def _read_manifest(path):
    splits = {"train": [], "val": []}
    current = None
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.endswith(":"):
            current = line[:-1]
            if current not in splits:
                raise ValueError(f"unknown split section '{current}' in {path}")
            continue
        if current is None:
            raise ValueError(f"stem '{line}' appears before any split section in {path}")
        splits[current].append(line)
    return splits


def load_paired_dataset(root, split):
    """Load the hazy/clean pairs of one split, ordered by stem.

    Pairs are matched by filename stem between root/hazy and root/gt; orphans
    and dimension mismatches are reported per file."""
    root = Path(root)
    hazy_dir, gt_dir = root / "hazy", root / "gt"
    for d in (hazy_dir, gt_dir):
        if not d.is_dir():
            raise ValueError(f"missing dataset directory: {d}")
    manifest = root / MANIFEST_NAME
    if manifest.exists():
        stems = _read_manifest(manifest)[split]
    else:
        if split != "train":
            raise ValueError(f"no manifest at {manifest}; only an implicit 'train' split exists")
        stems = sorted(p.stem for p in hazy_dir.glob("*.png"))
    if not stems:
        raise ValueError(f"split '{split}' is empty")

    pairs = []
    problems = []
    for stem in sorted(stems):
        hazy_path = hazy_dir / f"{stem}.png"
        clean_path = gt_dir / f"{stem}.png"
        if not hazy_path.exists():
            problems.append(f"{stem}: missing hazy file")
            continue
        if not clean_path.exists():
            problems.append(f"{stem}: missing gt file")
            continue
        hazy_size = _png_size(hazy_path)
        clean_size = _png_size(clean_path)
        if hazy_size != clean_size:
            problems.append(
                f"{stem}: dimension mismatch hazy {hazy_size} vs gt {clean_size}")
            continue
        pairs.append(HazePair(hazy_path, clean_path, id=stem))
    if problems:
        raise ValueError("dataset problems:\n" + "\n".join(problems))
    return pairs


def validate_pair_dims(pair):
    hazy, clean = pair.load()
    if hazy.shape != clean.shape:
        raise ValueError(
            f"{pair.id}: dimension mismatch hazy {hazy.shape} vs gt {clean.shape}")
    return hazy, clean


def make_training_batch(pairs, patch, batch, seed, step=0, cache=None):
    """Draw one deterministic batch of aligned random crops.

    Returns (hazy, clean) arrays of shape (batch, patch, patch, 3). The same
    (seed, step) always yields bitwise-identical batches. `cache` may map
    pair ids to preloaded (hazy, clean) arrays."""
    rng = np.random.default_rng([seed, step])
    hazy_out = np.empty((batch, patch, patch, 3), dtype=np.float32)
    clean_out = np.empty((batch, patch, patch, 3), dtype=np.float32)
    idx = rng.integers(0, len(pairs), size=batch)
    for b, i in enumerate(idx):
        pair = pairs[i]
        if cache is not None and pair.id in cache:
            hazy, clean = cache[pair.id]
        else:
            hazy, clean = validate_pair_dims(pair)
            if cache is not None:
                cache[pair.id] = (hazy, clean)
        h, w = hazy.shape[:2]
        if patch > min(h, w):
            raise ValueError(f"patch {patch} exceeds image size {h}x{w} ({pair.id})")
        top = int(rng.integers(0, h - patch + 1))
        left = int(rng.integers(0, w - patch + 1))
        hc = hazy[top:top + patch, left:left + patch]
        cc = clean[top:top + patch, left:left + patch]
        if rng.random() < 0.5:
            hc = hc[:, ::-1]
            cc = cc[:, ::-1]
        hazy_out[b] = hc
        clean_out[b] = cc
    return hazy_out, clean_out

import numpy as np
import pytest
import torch


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(0)


def naive_dft2(x):
    """Brute-force O(N^2) 2-D DFT of a real (H, W) numpy array."""
    h, w = x.shape
    out = np.zeros((h, w), dtype=complex)
    for u in range(h):
        for v in range(w):
            acc = 0.0 + 0.0j
            for m in range(h):
                for n in range(w):
                    acc += x[m, n] * np.exp(-2j * np.pi * (u * m / h + v * n / w))
            out[u, v] = acc
    return out


def naive_idft2(spec):
    """Brute-force inverse DFT (1/(H*W) normalization) of a full complex spectrum."""
    h, w = spec.shape
    out = np.zeros((h, w), dtype=complex)
    for m in range(h):
        for n in range(w):
            acc = 0.0 + 0.0j
            for u in range(h):
                for v in range(w):
                    acc += spec[u, v] * np.exp(2j * np.pi * (u * m / h + v * n / w))
            out[m, n] = acc / (h * w)
    return out


def write_png(path, img):
    """Save an (H, W, 3) float RGB image in [0, 1] as 8-bit PNG."""
    import cv2
    bgr = cv2.cvtColor(np.clip(img, 0, 1).astype(np.float32), cv2.COLOR_RGB2BGR)
    assert cv2.imwrite(str(path), np.round(bgr * 255).astype(np.uint8))


def make_clean_scene(rng, size=128):
    """Procedural 'clean' image: smooth color field plus a few rectangles,
    enough structure for PSNR/SSIM to be meaningful."""
    import cv2
    base = rng.random((8, 8, 3))
    img = cv2.resize(base, (size, size), interpolation=cv2.INTER_CUBIC)
    for _ in range(6):
        x0, y0 = rng.integers(0, size - 8, size=2)
        w, h = rng.integers(4, size // 3, size=2)
        color = rng.random(3)
        img[y0:y0 + h, x0:x0 + w] = 0.7 * img[y0:y0 + h, x0:x0 + w] + 0.3 * color
    return np.clip(img, 0.02, 0.98).astype(np.float32)


def build_synthetic_dataset(root, n_train, n_val, size=128, seed=0):
    """Write an aligned hazy/gt tree with a train/val manifest; returns root."""
    from bicolor_dehaze import data as data_mod
    rng = np.random.default_rng(seed)
    (root / "hazy").mkdir(parents=True)
    (root / "gt").mkdir(parents=True)
    stems = [f"scene_{i:04d}" for i in range(n_train + n_val)]
    for i, stem in enumerate(stems):
        clean = make_clean_scene(rng, size)
        params = data_mod.sample_asm_params([seed, i], size, size)
        hazy = data_mod.synthesize_haze(clean, params)
        write_png(root / "gt" / f"{stem}.png", clean)
        write_png(root / "hazy" / f"{stem}.png", hazy)
    with open(root / "splits.txt", "w") as f:
        f.write("train:\n")
        f.writelines(s + "\n" for s in stems[:n_train])
        f.write("val:\n")
        f.writelines(s + "\n" for s in stems[n_train:])
    return root

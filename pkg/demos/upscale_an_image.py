"""Run the x2 super-resolution forward pass on a synthetic PNG.

There is no training in this package, so the network runs with seeded
random weights: the point of the demo is the pipeline itself (PNG in,
convolution trunk, token sequence with positional embedding, decoder
layers with linear attention, pixel shuffle, PNG out), its exact output
shape, and its bitwise determinism, not visual quality.
"""

from pathlib import Path

import numpy as np

from srlite import image
from srlite.metrics import psnr, ssim
from srlite.network import NetworkConfig, init_params, super_resolve

OUT_DIR = Path("demo_output")


def synthetic_image(h, w):
    """A gradient background with dark strokes, vaguely like text on paper."""
    yy, xx = np.mgrid[0:h, 0:w]
    base = 140 + 60 * xx / w + 30 * yy / h
    img = np.repeat(base[..., None], 3, axis=2)
    for col in range(4, w - 4, 9):  # vertical strokes
        img[3 : h - 3, col : col + 2] = 40
    img[h // 2 : h // 2 + 2, 4 : w - 4] = 40  # one horizontal bar
    return img.astype(np.uint8)


def main():
    OUT_DIR.mkdir(exist_ok=True)
    lr_u8 = synthetic_image(16, 48)
    image.save_png(OUT_DIR / "input.png", lr_u8)
    print(f"wrote {OUT_DIR / 'input.png'} ({lr_u8.shape[1]}x{lr_u8.shape[0]})")

    cfg = NetworkConfig(model_dim=32, heads=8, decoder_layers=1, seed=0)
    params = init_params(cfg)
    lr = image.to_tensor(lr_u8)
    hr = super_resolve(params, cfg, lr)
    print(f"forward: {tuple(lr.shape)} -> {tuple(hr.shape)}, values in "
          f"[{hr.min():.3f}, {hr.max():.3f}]")

    hr_u8 = image.from_tensor(hr)
    image.save_png(OUT_DIR / "output.png", hr_u8)
    print(f"wrote {OUT_DIR / 'output.png'} ({hr_u8.shape[1]}x{hr_u8.shape[0]})")

    again = image.from_tensor(super_resolve(params, cfg, lr))
    print(f"second run identical: {np.array_equal(hr_u8, again)}")

    # nearest-neighbor upscale of the input as a reference point for the
    # metrics; an untrained network should not be expected to beat it
    nn = np.repeat(np.repeat(lr_u8, 2, axis=0), 2, axis=1)
    print(f"PSNR/SSIM vs nearest-neighbor reference: "
          f"{psnr(hr_u8, nn):.2f} dB / {ssim(hr_u8, nn):.4f}")
    print("(random weights: low scores are the honest outcome here)")


if __name__ == "__main__":
    main()

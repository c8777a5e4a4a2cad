"""PNG image I/O and the uint8 HWC <-> float BCHW conversions.

PNG is the only codec. Images are 8-bit RGB on disk; in-memory network
tensors are float32 (1, 3, H, W) scaled to [0, 1] by /255.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

__all__ = ["from_tensor", "load_png", "save_png", "to_tensor"]


def load_png(path: str | Path) -> np.ndarray:
    """Read a PNG as a uint8 (H, W, 3) array; other modes convert to RGB."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_png(path: str | Path, img: np.ndarray) -> None:
    """Write a uint8 (H, W, 3) array as a PNG."""
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected uint8 (H, W, 3), got {img.dtype} {img.shape}")
    Image.fromarray(img, mode="RGB").save(path, format="PNG")


def to_tensor(img: np.ndarray) -> np.ndarray:
    """uint8 (H, W, 3) -> float32 (1, 3, H, W) in [0, 1]."""
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected uint8 (H, W, 3), got {img.dtype} {img.shape}")
    return (img.astype(np.float32) / 255.0).transpose(2, 0, 1)[None, ...]


def from_tensor(t: np.ndarray) -> np.ndarray:
    """float (1, 3, H, W) in [0, 1] -> uint8 (H, W, 3), rounding half up."""
    t = np.asarray(t)
    if t.ndim != 4 or t.shape[0] != 1 or t.shape[1] != 3:
        raise ValueError(f"expected (1, 3, H, W), got {t.shape}")
    arr = np.clip(t[0], 0.0, 1.0) * 255.0
    return np.floor(arr + 0.5).astype(np.uint8).transpose(1, 2, 0)

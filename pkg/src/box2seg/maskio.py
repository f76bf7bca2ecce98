"""Mask persistence and colorization.

Masks are stored as single-channel 8-bit palette PNGs whose pixel values are
the raw label ids (255 = ignore), so files stay bit-exact while remaining
viewable in any image tool. Writes go through a temp file plus rename, so an
interrupted run never leaves a truncated file that parses.
"""
from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from .model import IGNORE, validate_mask

# Fixed display palette (single source of truth for every overlay).
PALETTE = {
    0: (0, 0, 0),  # background
    1: (0, 0, 142),  # vehicle
    2: (220, 220, 0),  # sign
    3: (220, 20, 60),  # human
    IGNORE: (128, 128, 128),
}

CLASS_NAMES = {0: "background", 1: "vehicle", 2: "sign", 3: "human", IGNORE: "ignore"}


def _flat_palette() -> list[int]:
    flat = [0] * (256 * 3)
    for value, (r, g, b) in PALETTE.items():
        flat[value * 3 : value * 3 + 3] = [r, g, b]
    return flat


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_mask(path: Union[str, Path], mask: np.ndarray) -> None:
    validate_mask(mask)
    image = Image.fromarray(mask, mode="P")
    image.putpalette(_flat_palette())
    import io

    buf = io.BytesIO()
    image.save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def load_mask(path: Union[str, Path]) -> np.ndarray:
    with Image.open(path) as image:
        mask = np.asarray(image, dtype=np.uint8)
    validate_mask(mask)
    return mask


def colorize(mask: np.ndarray) -> np.ndarray:
    """Map label ids to RGB using the fixed palette."""
    lut = np.zeros((256, 3), dtype=np.uint8)
    for value, color in PALETTE.items():
        lut[value] = color
    return lut[mask]


def render_overlay(image: np.ndarray, mask: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Alpha-blend mask colors over the photo; background stays untouched."""
    if image.shape[:2] != mask.shape:
        raise ValueError(f"image dims {image.shape[:2]} do not match mask {mask.shape}")
    base = image.astype(np.float32)
    if base.ndim == 2:
        base = np.stack([base] * 3, axis=-1)
    colors = colorize(mask).astype(np.float32)
    blend = mask != 0
    out = base.copy()
    out[blend] = (1.0 - alpha) * base[blend] + alpha * colors[blend]
    return out.astype(np.uint8)

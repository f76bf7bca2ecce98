"""Working-frame preparation, priority-based mask fusion, label-safe resize.

Fusion consumes filtered boxes in order, batch by batch, and lets a pixel be
overwritten only when the incoming class priority is at least the current
one. Equal priorities therefore resolve to the later box, which is why the
box order (area-descending from the filter stage) is part of the contract:
given the same order and backend, the fused mask is bit-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .backend import BackendError, BoxPrompt, MaskBackend
from .model import (
    IGNORE,
    PRIORITY,
    BoundingBox,
    map_input_to_output_class,
    new_mask,
    priority_lut,
)


@dataclass(frozen=True)
class FusionConfig:
    working_long_side: int = 1024
    batch_size: int = 16
    output_side: int = 768
    resize_mode: str = "soft_argmax"  # or "nearest"

    def __post_init__(self):
        if self.working_long_side <= 0 or self.batch_size <= 0 or self.output_side <= 0:
            raise ValueError("fusion dimensions and batch size must be positive")
        if self.output_side > self.working_long_side:
            raise ValueError("output_side must not exceed working_long_side")
        if self.resize_mode not in ("soft_argmax", "nearest"):
            raise ValueError("resize_mode must be 'soft_argmax' or 'nearest'")


@dataclass(frozen=True)
class WorkingFrame:
    """Scaled frame geometry: no padding, longest side == working_long_side."""

    scale: float
    width: int
    height: int
    boxes: tuple[BoundingBox, ...]


def prepare_working_frame(
    width: int, height: int, boxes, long_side: int = 1024
) -> WorkingFrame:
    """Scale frame dims and box coordinates so the longest side is exact."""
    if width <= 0 or height <= 0:
        raise ValueError(f"image dimensions must be positive, got {width}x{height}")
    scale = long_side / max(width, height)
    if width >= height:
        work_w = long_side
        work_h = max(1, round(height * scale))
    else:
        work_h = long_side
        work_w = max(1, round(width * scale))
    scaled = tuple(b.scaled(scale) for b in boxes)
    return WorkingFrame(scale=scale, width=work_w, height=work_h, boxes=scaled)


def resize_image(image: np.ndarray, width: int, height: int) -> np.ndarray:
    if image.shape[0] == height and image.shape[1] == width:
        return image
    return cv2.resize(image, (width, height), interpolation=cv2.INTER_LINEAR)


def _batches(items, size):
    for start in range(0, len(items), size):
        yield items[start : start + size]


def fuse_frame(
    image: np.ndarray,
    boxes,
    backend: MaskBackend,
    cfg: FusionConfig = FusionConfig(),
) -> np.ndarray:
    """Fuse per-box proposals into one semantic mask at working resolution.

    Boxes are consumed in list order in batches of ``cfg.batch_size``; for
    every proposal pixel that is on, the mask cell is overwritten with the
    box class iff the cell is background or the new priority is >= the
    current one. Backend failures raise, so a partial mask is never
    returned.
    """
    height, width = image.shape[:2]
    mask = new_mask(width, height)
    lut = priority_lut()
    for batch in _batches(list(boxes), cfg.batch_size):
        proposals = backend.predict(image, [BoxPrompt(b) for b in batch])
        if len(proposals) != len(batch):
            raise BackendError(
                f"backend returned {len(proposals)} proposals for {len(batch)} prompts"
            )
        for box, proposal in zip(batch, proposals):
            if proposal.grid.shape != (height, width):
                raise BackendError(
                    f"proposal grid {proposal.grid.shape} does not match working dims "
                    f"{(height, width)}"
                )
            cls = map_input_to_output_class(box.cls)
            rank = PRIORITY[cls]
            overwrite = proposal.grid & ((mask == 0) | (rank >= lut[mask]))
            mask[overwrite] = int(cls)
    return mask


# Tie-break order for soft-argmax resize: higher priority wins an exact tie.
# IGNORE is ranked below everything so real labels win against it.
def _tie_rank(label: int) -> int:
    if label == IGNORE:
        return -1
    return PRIORITY[label]


def resize_labels(mask: np.ndarray, target_side: int = 768, mode: str = "soft_argmax") -> np.ndarray:
    """Resize a label mask to ``target_side`` square without minting labels.

    soft_argmax: expand each present label into an indicator plane,
    bilinearly resample the planes, then take the per-pixel argmax with
    exact ties resolved to the higher-priority label. nearest: plain
    nearest-neighbor lookup. Both modes only ever emit labels already
    present in the input.
    """
    if mask.size == 0:
        raise ValueError("cannot resize an empty mask")
    if mode == "nearest":
        if mask.shape == (target_side, target_side):
            return mask.copy()
        return cv2.resize(mask, (target_side, target_side), interpolation=cv2.INTER_NEAREST)
    if mode != "soft_argmax":
        raise ValueError(f"unknown resize mode {mode!r}")

    labels = sorted((int(v) for v in np.unique(mask)), key=_tie_rank, reverse=True)
    if len(labels) == 1:
        return np.full((target_side, target_side), labels[0], dtype=np.uint8)
    planes = np.empty((len(labels), target_side, target_side), dtype=np.float32)
    for i, label in enumerate(labels):
        indicator = (mask == label).astype(np.float32)
        planes[i] = cv2.resize(
            indicator, (target_side, target_side), interpolation=cv2.INTER_LINEAR
        )
    # argmax returns the first maximum; planes are ordered by descending
    # priority, so exact ties resolve to the higher-priority label.
    winners = np.argmax(planes, axis=0)
    label_array = np.asarray(labels, dtype=np.uint8)
    return label_array[winners]

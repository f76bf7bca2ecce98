"""Conservative boundary refinement of an existing mask.

For each annotated box the backend is prompted with the box center; the
proposal then drives two bounded, box-local edits: expansion adds background
pixels that sit next to the current object boundary and that the proposal
marks as object, contraction removes object pixels next to background that
the proposal marks as background. Both edits are capped per box so the
original semantic intent cannot drift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .backend import MaskBackend, PointPrompt
from .model import BoundingBox, clamp_box, map_input_to_output_class

_STRUCTURE = np.ones((3, 3), dtype=bool)  # 8-neighbor adjacency


@dataclass(frozen=True)
class RefineConfig:
    # Cap on pixels changed per operation per box. None derives the cap from
    # the box area via max_changes_fraction.
    max_changes: Optional[int] = None
    max_changes_fraction: float = 0.10

    def __post_init__(self):
        if self.max_changes is not None and self.max_changes < 0:
            raise ValueError("max_changes must be >= 0")
        if self.max_changes_fraction < 0:
            raise ValueError("max_changes_fraction must be >= 0")

    def cap_for(self, box: BoundingBox) -> int:
        if self.max_changes is not None:
            return self.max_changes
        return math.ceil(self.max_changes_fraction * box.area)


@dataclass
class BoxRefinement:
    """Per-box change record for the refinement report."""

    index: int
    cls: str
    added: int = 0
    removed: int = 0
    error: Optional[str] = None


def _cap_scanline(candidates: np.ndarray, cap: int) -> np.ndarray:
    """Keep at most ``cap`` True cells, selected in row-major scanline order."""
    count = int(candidates.sum())
    if count <= cap:
        return candidates
    flat = candidates.ravel()
    keep_idx = np.flatnonzero(flat)[:cap]
    capped = np.zeros_like(flat)
    capped[keep_idx] = True
    return capped.reshape(candidates.shape)


def refine_mask(
    mask: np.ndarray,
    image: np.ndarray,
    boxes: Sequence[BoundingBox],
    backend: MaskBackend,
    cfg: RefineConfig = RefineConfig(),
) -> tuple[np.ndarray, list[BoxRefinement]]:
    """Refine ``mask`` around each box; returns the new mask and a report.

    Boxes are processed strictly in input order and later boxes observe
    earlier edits. A backend failure skips only the offending box:
    refinement is best-effort, unlike fusion.
    """
    height, width = mask.shape
    if image.shape[:2] != (height, width):
        raise ValueError(f"image dims {image.shape[:2]} do not match mask {(height, width)}")
    out = mask.copy()
    report = []
    for index, box in enumerate(boxes):
        cls = map_input_to_output_class(box.cls)
        record = BoxRefinement(index=index, cls=box.cls.value)
        clamped = clamp_box(box, width, height)
        if clamped is None:
            record.error = "degenerate box"
            report.append(record)
            continue
        cap = cfg.cap_for(clamped)
        cx = (clamped.x_min + clamped.x_max) / 2.0
        cy = (clamped.y_min + clamped.y_max) / 2.0
        try:
            (proposal,) = backend.predict(image, [PointPrompt(cx, cy)])
        except Exception as exc:
            record.error = str(exc)
            report.append(record)
            continue
        if proposal.grid.shape != (height, width):
            record.error = (
                f"proposal grid {proposal.grid.shape} does not match mask {(height, width)}"
            )
            report.append(record)
            continue

        # All edits confined to the box raster window.
        x0 = int(math.floor(clamped.x_min))
        y0 = int(math.floor(clamped.y_min))
        x1 = min(width, int(math.ceil(clamped.x_max)))
        y1 = min(height, int(math.ceil(clamped.y_max)))
        window = (slice(y0, y1), slice(x0, x1))
        region = out[window]
        prop = proposal.grid[window]

        # Expansion: background pixels 8-adjacent to the object that the
        # proposal marks as object. Adjacency is computed once against the
        # pre-expansion region (single pass, no cascading growth).
        current = region == int(cls)
        adjacent = ndimage.binary_dilation(current, structure=_STRUCTURE)
        add = (region == 0) & adjacent & prop
        add = _cap_scanline(add, cap)
        region[add] = int(cls)
        record.added = int(add.sum())

        # Contraction: object pixels 8-adjacent to background that the
        # proposal marks as background; sees the post-expansion region.
        current = region == int(cls)
        near_bg = ndimage.binary_dilation(region == 0, structure=_STRUCTURE)
        remove = current & near_bg & ~prop
        remove = _cap_scanline(remove, cap)
        region[remove] = 0
        record.removed = int(remove.sum())

        report.append(record)
    return out, report

"""Bounding-box filtering: validity checks, intra-class IoU dedup, top-k.

The stage is a pure function of its inputs: clamp, validate, deduplicate
within each class keeping the larger box, then keep the k largest survivors.
Output order is area-descending with input order breaking ties, which makes
the whole stage deterministic and idempotent.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .model import BoundingBox, InputClass, clamp_box


@dataclass(frozen=True)
class FilterConfig:
    min_dim_vehicle: float = 30.0
    min_dim_small: float = 15.0  # signs, pedestrians, cyclists
    max_aspect_ratio: float = 8.0
    max_area_fraction: float = 0.40
    dedup_iou: float = 0.3
    top_k: int = 75
    # Which side the class minimum applies to. "min" is the stricter reading
    # of a bare ">N px" threshold; "max" kept as an alternative.
    size_metric: str = "min"

    def __post_init__(self):
        if self.min_dim_vehicle <= 0 or self.min_dim_small <= 0:
            raise ValueError("size thresholds must be positive")
        if self.max_aspect_ratio <= 0:
            raise ValueError("max_aspect_ratio must be positive")
        if not (0.0 < self.max_area_fraction <= 1.0):
            raise ValueError("max_area_fraction must lie in (0, 1]")
        if self.dedup_iou <= 0:
            raise ValueError("dedup_iou must be positive")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.size_metric not in ("min", "max"):
            raise ValueError("size_metric must be 'min' or 'max'")


class RejectReason(str, enum.Enum):
    TOO_SMALL = "too_small"
    TOO_ELONGATED = "too_elongated"
    TOO_LARGE = "too_large"


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0.0 when disjoint."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def _min_dim(box: BoundingBox, cfg: FilterConfig) -> float:
    return cfg.min_dim_vehicle if box.cls is InputClass.VEHICLE else cfg.min_dim_small


def validate_box(
    box: BoundingBox, width: float, height: float, cfg: FilterConfig
) -> Optional[RejectReason]:
    """Return None when the box passes all checks, else the first reject reason.

    Expects the box to be clamped to image bounds already.
    """
    side = min(box.width, box.height) if cfg.size_metric == "min" else max(box.width, box.height)
    if side <= _min_dim(box, cfg):
        return RejectReason.TOO_SMALL
    ratio = max(box.width, box.height) / min(box.width, box.height)
    if ratio >= cfg.max_aspect_ratio:
        return RejectReason.TOO_ELONGATED
    if box.area > cfg.max_area_fraction * width * height:
        return RejectReason.TOO_LARGE
    return None


def dedup_boxes(boxes: Sequence[BoundingBox], iou_threshold: float = 0.3) -> list[BoundingBox]:
    """Greedy same-class suppression keeping the larger box.

    Boxes are visited in area-descending order (ties: input order); a box
    survives iff its IoU with every already-kept box of the same class stays
    below the threshold. Boxes of different classes never suppress each
    other. The output preserves the visit order, so no coordinates are ever
    merged or synthesized.
    """
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].area, i))
    kept: list[BoundingBox] = []
    for i in order:
        box = boxes[i]
        if all(
            k.cls is not box.cls or box_iou(k, box) < iou_threshold for k in kept
        ):
            kept.append(box)
    return kept


@dataclass
class FilterOutcome:
    kept: list[BoundingBox]
    degenerate: int = 0
    rejected: dict = field(default_factory=dict)  # RejectReason -> count
    suppressed: int = 0
    truncated: int = 0


def filter_frame_verbose(
    boxes: Sequence[BoundingBox], width: float, height: float, cfg: FilterConfig = FilterConfig()
) -> FilterOutcome:
    """Full filter stage with per-stage counters for run reports."""
    outcome = FilterOutcome(kept=[], rejected={r: 0 for r in RejectReason})
    validated = []
    for box in boxes:
        clamped = clamp_box(box, width, height)
        if clamped is None:
            outcome.degenerate += 1
            continue
        reason = validate_box(clamped, width, height, cfg)
        if reason is not None:
            outcome.rejected[reason] += 1
            continue
        validated.append(clamped)
    deduped = dedup_boxes(validated, cfg.dedup_iou)
    outcome.suppressed = len(validated) - len(deduped)
    outcome.truncated = max(0, len(deduped) - cfg.top_k)
    outcome.kept = deduped[: cfg.top_k]
    return outcome


def filter_frame(
    boxes: Sequence[BoundingBox], width: float, height: float, cfg: FilterConfig = FilterConfig()
) -> list[BoundingBox]:
    """clamp -> validate -> dedup -> top-k, sorted area-descending."""
    return filter_frame_verbose(boxes, width, height, cfg).kept

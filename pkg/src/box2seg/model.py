"""Shared data model: class taxonomies, boxes, masks, frames, projections.

All types here are immutable value objects and can be shared freely between
worker threads. Semantic masks themselves are plain ``numpy`` ``uint8`` arrays
of shape ``(height, width)`` whose cells hold :class:`OutputClass` ids or the
:data:`IGNORE` sentinel; ``validate_mask`` checks that contract.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

# Pixels carrying this value are excluded from training supervision and from
# every metric denominator. 255 keeps masks serializable as 8-bit rasters.
IGNORE = 255


class InputClass(str, enum.Enum):
    """Object classes as they appear on incoming bounding-box labels."""

    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"
    SIGN = "sign"

    @classmethod
    def parse(cls, value: str) -> "InputClass":
        try:
            return cls(value)
        except ValueError:
            allowed = ", ".join(c.value for c in cls)
            raise ValueError(f"unknown input class {value!r} (allowed: {allowed})") from None


class OutputClass(enum.IntEnum):
    """Mask label ids. Pedestrians and cyclists collapse into HUMAN."""

    BACKGROUND = 0
    VEHICLE = 1
    SIGN = 2
    HUMAN = 3


FOREGROUND_CLASSES = (OutputClass.VEHICLE, OutputClass.SIGN, OutputClass.HUMAN)

# Strict ranking used when overlapping mask proposals compete for a pixel:
# vulnerable road users beat signs beat vehicles beat background.
PRIORITY = {
    OutputClass.BACKGROUND: 0,
    OutputClass.VEHICLE: 1,
    OutputClass.SIGN: 2,
    OutputClass.HUMAN: 3,
}

_INPUT_TO_OUTPUT = {
    InputClass.VEHICLE: OutputClass.VEHICLE,
    InputClass.SIGN: OutputClass.SIGN,
    InputClass.PEDESTRIAN: OutputClass.HUMAN,
    InputClass.CYCLIST: OutputClass.HUMAN,
}


def map_input_to_output_class(c: InputClass) -> OutputClass:
    """Map an input class to its mask label id."""
    return _INPUT_TO_OUTPUT[c]


def priority_lut() -> np.ndarray:
    """256-entry lookup from mask value to priority rank; IGNORE maps to -1."""
    lut = np.full(256, -1, dtype=np.int16)
    for cls, rank in PRIORITY.items():
        lut[int(cls)] = rank
    return lut


class Weather(str, enum.Enum):
    DAY_FAIR = "day_fair"
    DAY_RAIN = "day_rain"
    NIGHT_FAIR = "night_fair"
    NIGHT_RAIN = "night_rain"
    SNOW = "snow"

    @classmethod
    def parse(cls, value: str) -> "Weather":
        try:
            return cls(value)
        except ValueError:
            allowed = ", ".join(c.value for c in cls)
            raise ValueError(f"unknown weather {value!r} (allowed: {allowed})") from None


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned 2D box in continuous source-image pixel coordinates.

    Coordinates stay continuous until the point of use; rasterization happens
    only when a box reaches the proposal backend or an edit window.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    cls: InputClass

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def scaled(self, factor: float) -> "BoundingBox":
        return replace(
            self,
            x_min=self.x_min * factor,
            y_min=self.y_min * factor,
            x_max=self.x_max * factor,
            y_max=self.y_max * factor,
        )


def clamp_box(box: BoundingBox, width: float, height: float) -> Optional[BoundingBox]:
    """Clamp a box to ``[0, width] x [0, height]``.

    Returns ``None`` when the clamped box is degenerate (zero width or
    height); callers drop such boxes rather than treating them as errors.
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"image dimensions must be positive, got {width}x{height}")
    x_min = min(max(box.x_min, 0.0), float(width))
    x_max = min(max(box.x_max, 0.0), float(width))
    y_min = min(max(box.y_min, 0.0), float(height))
    y_max = min(max(box.y_max, 0.0), float(height))
    if x_max <= x_min or y_max <= y_min:
        return None
    return replace(box, x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max)


@dataclass(frozen=True)
class FrameRecord:
    """One manifest entry: an image, its boxes, and optional LiDAR data."""

    frame_id: str
    image_path: str
    width: int
    height: int
    weather: Weather
    boxes: tuple[BoundingBox, ...]
    lidar_path: Optional[str] = None
    calibration_path: Optional[str] = None


def new_mask(width: int, height: int) -> np.ndarray:
    """All-background mask of the given dimensions."""
    return np.zeros((height, width), dtype=np.uint8)


_VALID_MASK_VALUES = np.zeros(256, dtype=bool)
for _c in OutputClass:
    _VALID_MASK_VALUES[int(_c)] = True
_VALID_MASK_VALUES[IGNORE] = True


def validate_mask(mask: np.ndarray) -> None:
    """Raise ValueError unless every cell is a valid label id or IGNORE."""
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.dtype != np.uint8:
        raise ValueError(f"mask dtype must be uint8, got {mask.dtype}")
    if not _VALID_MASK_VALUES[mask].all():
        bad = sorted(int(v) for v in np.unique(mask) if not _VALID_MASK_VALUES[v])
        raise ValueError(f"mask contains invalid label values {bad}")


def validate_projection(matrix: np.ndarray) -> np.ndarray:
    """Check and return a 3x4 float64 projection matrix."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (3, 4):
        raise ValueError(f"projection matrix must be 3x4, got {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("projection matrix contains non-finite entries")
    return m

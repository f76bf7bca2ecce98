"""Modality-specific annotation variants derived from the fused mask.

Camera-native: a narrow ignore band along all borders plus removal of tiny
connected components. LiDAR-native: labels restricted to pixels that carry
at least one valid projected LiDAR return; everything else becomes IGNORE,
with no dilation of any kind so the sensor's sampling pattern is preserved.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy import ndimage

from .model import IGNORE, FOREGROUND_CLASSES, validate_projection


@dataclass(frozen=True)
class CameraAnnotConfig:
    border_fraction: float = 0.01  # of image height
    min_component_px: int = 25
    connectivity: int = 8

    def __post_init__(self):
        if not (0.0 <= self.border_fraction < 0.5):
            raise ValueError("border_fraction must lie in [0, 0.5)")
        if self.min_component_px < 1:
            raise ValueError("min_component_px must be >= 1")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")


@dataclass(frozen=True)
class LidarAnnotConfig:
    max_range: float = 90.0
    dilation: int = 0  # hard-disabled; labels never grow beyond returns

    def __post_init__(self):
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if self.dilation != 0:
            raise ValueError("dilation is hard-disabled and must stay 0")


def _structure(connectivity: int) -> np.ndarray:
    return np.ones((3, 3), dtype=bool) if connectivity == 8 else ndimage.generate_binary_structure(2, 1)


def label_components(binary: np.ndarray, connectivity: int = 8):
    """Label connected components; returns (label grid, component count)."""
    labels, count = ndimage.label(binary, structure=_structure(connectivity))
    return labels, count


@dataclass
class Component:
    label: int
    size: int
    pixels: np.ndarray  # (N, 2) array of (row, col)


def connected_components(binary: np.ndarray, connectivity: int = 8) -> list[Component]:
    """All maximal connected components of a binary grid."""
    labels, count = label_components(binary, connectivity)
    if count == 0:
        return []
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_labels = flat[order]
    rows, cols = np.unravel_index(order, labels.shape)
    coords = np.stack([rows, cols], axis=1)
    components = []
    starts = np.searchsorted(sorted_labels, np.arange(1, count + 1), side="left")
    ends = np.searchsorted(sorted_labels, np.arange(1, count + 1), side="right")
    for label, (start, end) in enumerate(zip(starts, ends), start=1):
        components.append(Component(label=label, size=end - start, pixels=coords[start:end]))
    return components


def camera_annotation(mask: np.ndarray, cfg: CameraAnnotConfig = CameraAnnotConfig()) -> np.ndarray:
    """Camera-native variant: border ignore band + small-component removal.

    The band width is derived from the image height alone and applied to all
    four sides. Components are measured after the band is applied, so no
    foreground component below the size threshold can survive, and removed
    components become background (they are treated as label noise, not as
    uncertain regions).
    """
    height, width = mask.shape
    out = mask.copy()
    band = max(1, round(cfg.border_fraction * height))
    out[:band, :] = IGNORE
    out[-band:, :] = IGNORE
    out[:, :band] = IGNORE
    out[:, -band:] = IGNORE
    for cls in FOREGROUND_CLASSES:
        binary = out == int(cls)
        if not binary.any():
            continue
        labels, count = label_components(binary, cfg.connectivity)
        sizes = np.bincount(labels.ravel(), minlength=count + 1)
        small = np.flatnonzero(sizes[1:] < cfg.min_component_px) + 1
        if small.size:
            out[np.isin(labels, small)] = 0
    return out


@dataclass
class CoverageMask:
    """Where valid LiDAR returns land, plus the per-pixel minimum range."""

    coverage: np.ndarray  # bool (height, width)
    min_range: np.ndarray  # float32 (height, width), inf where uncovered
    skipped_points: int = 0  # non-finite inputs dropped


def project_cloud(
    points: np.ndarray,
    projection: np.ndarray,
    width: int,
    height: int,
    max_range: float = 90.0,
    coord_scale: tuple[float, float] = (1.0, 1.0),
) -> CoverageMask:
    """Project 3D points through a 3x4 matrix onto a pixel grid.

    A point contributes coverage iff its projective depth is strictly
    positive, its Euclidean range is within ``max_range`` and its pixel
    lands inside the grid. ``coord_scale`` rescales projected (u, v) when
    the target grid resolution differs from the calibrated image, e.g. when
    building coverage directly at mask resolution.
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"target dimensions must be positive, got {width}x{height}")
    matrix = validate_projection(projection)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    finite = np.isfinite(pts).all(axis=1)
    skipped = int(pts.shape[0] - finite.sum())
    pts = pts[finite]

    coverage = np.zeros((height, width), dtype=bool)
    min_range = np.full((height, width), np.inf, dtype=np.float32)
    if pts.shape[0] == 0:
        return CoverageMask(coverage, min_range, skipped)

    hom = np.concatenate([pts, np.ones((pts.shape[0], 1))], axis=1)
    proj = hom @ matrix.T  # (N, 3)
    depth = proj[:, 2]
    ranges = np.linalg.norm(pts, axis=1)
    visible = (depth > 0) & (ranges <= max_range)
    if not visible.any():
        return CoverageMask(coverage, min_range, skipped)

    u = proj[visible, 0] / depth[visible] * coord_scale[0]
    v = proj[visible, 1] / depth[visible] * coord_scale[1]
    px = np.floor(u).astype(np.int64)
    py = np.floor(v).astype(np.int64)
    inside = (px >= 0) & (px < width) & (py >= 0) & (py < height)
    px, py = px[inside], py[inside]
    r = ranges[visible][inside].astype(np.float32)
    coverage[py, px] = True
    np.minimum.at(min_range, (py, px), r)
    return CoverageMask(coverage, min_range, skipped)


def lidar_annotation(mask: np.ndarray, coverage: np.ndarray) -> np.ndarray:
    """LiDAR-native variant: covered pixels keep their label, rest IGNORE."""
    cov = coverage.coverage if isinstance(coverage, CoverageMask) else coverage
    if cov.shape != mask.shape:
        raise ValueError(f"coverage shape {cov.shape} does not match mask {mask.shape}")
    return np.where(cov, mask, np.uint8(IGNORE)).astype(np.uint8)


# LiDAR file format: little-endian float32 (x, y, z) triples, count implied
# by file size. Calibration: 12 whitespace-separated floats, row-major 3x4.

def read_point_cloud(path: Union[str, Path]) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) % 12 != 0:
        raise ValueError(f"{path}: size {len(data)} is not a multiple of 12 bytes")
    return np.frombuffer(data, dtype="<f4").reshape(-1, 3).astype(np.float32)


def write_point_cloud(path: Union[str, Path], points: np.ndarray) -> None:
    pts = np.asarray(points, dtype="<f4").reshape(-1, 3)
    Path(path).write_bytes(pts.tobytes())


def read_projection(path: Union[str, Path]) -> np.ndarray:
    values = Path(path).read_text().split()
    if len(values) != 12:
        raise ValueError(f"{path}: expected 12 matrix entries, found {len(values)}")
    return validate_projection(np.asarray([float(v) for v in values]).reshape(3, 4))


def write_projection(path: Union[str, Path], matrix: np.ndarray) -> None:
    m = validate_projection(matrix)
    lines = [" ".join(repr(float(v)) for v in row) for row in m]
    Path(path).write_text("\n".join(lines) + "\n")

"""End-to-end orchestration: filter -> fuse -> resize -> persist, per frame.

Frames are independent work units processed by a bounded thread pool; any
per-frame failure (unreadable image, backend error, write error) is recorded
in the run report and never aborts the run. Mask files are written
atomically, and with a deterministic backend two runs over the same manifest
produce bit-identical artifacts.
"""
from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

from . import __version__
from .backend import BackendError, MaskBackend, make_backend
from .boxfilter import FilterConfig, filter_frame_verbose
from .fusion import FusionConfig, fuse_frame, prepare_working_frame, resize_image, resize_labels
from .manifest import read_manifest
from .maskio import save_mask
from .model import FrameRecord, OutputClass
from .refine import RefineConfig
from .variants import (
    CameraAnnotConfig,
    LidarAnnotConfig,
    camera_annotation,
    lidar_annotation,
    project_cloud,
    read_point_cloud,
    read_projection,
)


@dataclass
class PipelineConfig:
    output_root: str = "out"
    backend: str = "synthetic"  # "synthetic" or an http(s) endpoint
    workers: int = 4
    seed: int = 0
    camera_variant: bool = False
    lidar_variant: bool = False
    filter: FilterConfig = field(default_factory=FilterConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    camera: CameraAnnotConfig = field(default_factory=CameraAnnotConfig)
    lidar: LidarAnnotConfig = field(default_factory=LidarAnnotConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)

    def snapshot(self) -> dict:
        return dataclasses.asdict(self)


_SECTION_TYPES = {
    "filter": FilterConfig,
    "fusion": FusionConfig,
    "camera": CameraAnnotConfig,
    "lidar": LidarAnnotConfig,
    "refine": RefineConfig,
}
_SCALAR_KEYS = ("output_root", "backend", "workers", "seed", "camera_variant", "lidar_variant")


class ConfigError(ValueError):
    pass


def load_config(path: Union[str, Path]) -> PipelineConfig:
    """Parse a YAML pipeline config; unknown keys are rejected."""
    import yaml

    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    kwargs = {}
    for key, value in data.items():
        if key in _SCALAR_KEYS:
            kwargs[key] = value
        elif key in _SECTION_TYPES:
            section_type = _SECTION_TYPES[key]
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: section {key!r} must be a mapping")
            known = {f.name for f in dataclasses.fields(section_type)}
            unknown = set(value) - known
            if unknown:
                raise ConfigError(f"{path}: unknown keys {sorted(unknown)} in section {key!r}")
            try:
                kwargs[key] = section_type(**value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}: bad section {key!r}: {exc}") from exc
        else:
            raise ConfigError(f"{path}: unknown config key {key!r}")
    return PipelineConfig(**kwargs)


@dataclass
class FrameResult:
    frame_id: str
    status: str  # ok | failed
    reason: Optional[str] = None
    boxes_in: int = 0
    boxes_kept: int = 0
    class_pixels: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


@dataclass
class RunReport:
    version: str
    config: dict
    frames: list
    counters: dict
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config": self.config,
            "frames": [dataclasses.asdict(f) for f in self.frames],
            "counters": self.counters,
            "wall_time": self.wall_time,
        }

    @property
    def failed(self) -> list:
        return [f for f in self.frames if f.status != "ok"]


def load_image(path: Union[str, Path]) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def process_frame(
    frame: FrameRecord, config: PipelineConfig, backend: MaskBackend, output_root: Path
) -> FrameResult:
    result = FrameResult(frame_id=frame.frame_id, status="ok", boxes_in=len(frame.boxes))
    timings = result.timings
    try:
        t0 = time.perf_counter()
        try:
            image = load_image(frame.image_path)
        except (OSError, ValueError) as exc:
            raise RuntimeError(f"image_unreadable: {exc}") from exc
        timings["load"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        outcome = filter_frame_verbose(frame.boxes, frame.width, frame.height, config.filter)
        result.boxes_kept = len(outcome.kept)
        timings["filter"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        working = prepare_working_frame(
            frame.width, frame.height, outcome.kept, config.fusion.working_long_side
        )
        work_image = resize_image(image, working.width, working.height)
        try:
            fused = fuse_frame(work_image, working.boxes, backend, config.fusion)
        except BackendError as exc:
            raise RuntimeError(f"backend_failed: {exc}") from exc
        timings["fuse"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        mask = resize_labels(fused, config.fusion.output_side, config.fusion.resize_mode)
        timings["resize"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        save_mask(output_root / "masks" / f"{frame.frame_id}.png", mask)
        if config.camera_variant:
            save_mask(
                output_root / "camera" / f"{frame.frame_id}.png",
                camera_annotation(mask, config.camera),
            )
        if config.lidar_variant:
            if not frame.lidar_path or not frame.calibration_path:
                raise RuntimeError("lidar_missing: frame has no lidar_path/calibration_path")
            points = read_point_cloud(frame.lidar_path)
            projection = read_projection(frame.calibration_path)
            side = config.fusion.output_side
            coverage = project_cloud(
                points,
                projection,
                width=side,
                height=side,
                max_range=config.lidar.max_range,
                coord_scale=(side / frame.width, side / frame.height),
            )
            save_mask(
                output_root / "lidar" / f"{frame.frame_id}.png",
                lidar_annotation(mask, coverage),
            )
        timings["write"] = time.perf_counter() - t0

        counts = np.bincount(mask.ravel(), minlength=256)
        result.class_pixels = {c.name.lower(): int(counts[int(c)]) for c in OutputClass}
    except Exception as exc:
        result.status = "failed"
        result.reason = str(exc)
    return result


def run_pipeline(config: PipelineConfig, manifest_path: Union[str, Path]) -> RunReport:
    """Run the full pipeline over a manifest and write a run report."""
    started = time.perf_counter()
    frames = read_manifest(manifest_path)
    output_root = Path(config.output_root)
    (output_root / "masks").mkdir(parents=True, exist_ok=True)
    if config.camera_variant:
        (output_root / "camera").mkdir(exist_ok=True)
    if config.lidar_variant:
        (output_root / "lidar").mkdir(exist_ok=True)
    backend = make_backend(config.backend)

    if config.workers <= 1 or len(frames) <= 1:
        results = [process_frame(f, config, backend, output_root) for f in frames]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(
                pool.map(lambda f: process_frame(f, config, backend, output_root), frames)
            )

    results.sort(key=lambda r: r.frame_id)
    counters = {
        "frames_total": len(results),
        "frames_ok": sum(1 for r in results if r.status == "ok"),
        "frames_failed": sum(1 for r in results if r.status != "ok"),
        "boxes_in": sum(r.boxes_in for r in results),
        "boxes_kept": sum(r.boxes_kept for r in results),
        "class_pixels": {
            c.name.lower(): sum(r.class_pixels.get(c.name.lower(), 0) for r in results)
            for c in OutputClass
        },
    }
    report = RunReport(
        version=__version__,
        config=config.snapshot(),
        frames=results,
        counters=counters,
        wall_time=time.perf_counter() - started,
    )
    report_path = output_root / "run_report.json"
    report_path.write_text(json.dumps(report.to_dict(), indent=2))
    return report

"""Manifest I/O: one JSON object per line, one line per frame.

Field names are part of the on-disk contract and are pinned by the golden
fixture in ``tests/fixtures/manifest_golden.jsonl``:

    frame_id, image_path, width, height, weather, boxes, lidar_path,
    calibration_path

where each box is ``{"x_min", "y_min", "x_max", "y_max", "class"}``.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Union

from .model import BoundingBox, FrameRecord, InputClass, Weather


class ManifestError(ValueError):
    """Raised when a manifest line cannot be parsed into a FrameRecord."""


_REQUIRED = ("frame_id", "image_path", "width", "height", "weather", "boxes")
_OPTIONAL = ("lidar_path", "calibration_path")


def frame_from_dict(record: dict) -> FrameRecord:
    missing = [k for k in _REQUIRED if k not in record]
    if missing:
        raise ManifestError(f"manifest record missing fields {missing}")
    unknown = [k for k in record if k not in _REQUIRED + _OPTIONAL]
    if unknown:
        raise ManifestError(f"manifest record has unknown fields {unknown}")
    try:
        weather = Weather.parse(record["weather"])
        boxes = tuple(
            BoundingBox(
                x_min=float(b["x_min"]),
                y_min=float(b["y_min"]),
                x_max=float(b["x_max"]),
                y_max=float(b["y_max"]),
                cls=InputClass.parse(b["class"]),
            )
            for b in record["boxes"]
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise ManifestError(f"bad manifest record {record.get('frame_id')!r}: {exc}") from exc
    return FrameRecord(
        frame_id=str(record["frame_id"]),
        image_path=str(record["image_path"]),
        width=int(record["width"]),
        height=int(record["height"]),
        weather=weather,
        boxes=boxes,
        lidar_path=record.get("lidar_path"),
        calibration_path=record.get("calibration_path"),
    )


def frame_to_dict(frame: FrameRecord) -> dict:
    record = {
        "frame_id": frame.frame_id,
        "image_path": frame.image_path,
        "width": frame.width,
        "height": frame.height,
        "weather": frame.weather.value,
        "boxes": [
            {
                "x_min": b.x_min,
                "y_min": b.y_min,
                "x_max": b.x_max,
                "y_max": b.y_max,
                "class": b.cls.value,
            }
            for b in frame.boxes
        ],
    }
    if frame.lidar_path is not None:
        record["lidar_path"] = frame.lidar_path
    if frame.calibration_path is not None:
        record["calibration_path"] = frame.calibration_path
    return record


def read_manifest(path: Union[str, Path]) -> list[FrameRecord]:
    """Parse a manifest file; rejects duplicate frame ids."""
    frames = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            frame = frame_from_dict(record)
            if frame.frame_id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate frame_id {frame.frame_id!r}")
            seen.add(frame.frame_id)
            frames.append(frame)
    return frames


def write_manifest(path: Union[str, Path], frames: Iterable[FrameRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for frame in frames:
            fh.write(json.dumps(frame_to_dict(frame)) + "\n")

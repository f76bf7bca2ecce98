"""Deterministic synthetic corpus generation for demos and end-to-end tests.

Images are simple gradients with painted rectangles at the box positions;
the content only matters insofar as the pipeline needs readable files.
LiDAR clouds are sampled in the frustum of a fixed pinhole projection.
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from PIL import Image

from .manifest import write_manifest
from .model import BoundingBox, FrameRecord, InputClass, Weather
from .variants import write_point_cloud, write_projection

_CLASS_CYCLE = (InputClass.VEHICLE, InputClass.PEDESTRIAN, InputClass.SIGN, InputClass.CYCLIST)

_BOX_SIZES = {
    InputClass.VEHICLE: (60, 180),
    InputClass.PEDESTRIAN: (20, 60),
    InputClass.CYCLIST: (24, 70),
    InputClass.SIGN: (18, 50),
}


def make_projection(width: int, height: int) -> np.ndarray:
    focal = 0.8 * width
    return np.array(
        [
            [focal, 0.0, width / 2.0, 0.0],
            [0.0, focal, height / 2.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ]
    )


def _random_boxes(rng: np.random.Generator, width: int, height: int, count: int):
    boxes = []
    for i in range(count):
        cls = _CLASS_CYCLE[i % len(_CLASS_CYCLE)]
        lo, hi = _BOX_SIZES[cls]
        w = float(rng.uniform(lo, hi))
        h = float(rng.uniform(lo, hi))
        x0 = float(rng.uniform(-10, width - w + 10))
        y0 = float(rng.uniform(-10, height - h + 10))
        boxes.append(BoundingBox(x0, y0, x0 + w, y0 + h, cls))
    return boxes


def _render_image(rng: np.random.Generator, width: int, height: int, boxes) -> np.ndarray:
    ys = np.linspace(40, 120, height, dtype=np.float32)[:, None]
    xs = np.linspace(60, 160, width, dtype=np.float32)[None, :]
    image = np.stack([ys + xs * 0.2, ys * 0.6 + 40, xs * 0.5 + 30], axis=-1)
    for box in boxes:
        x0, y0 = max(0, int(box.x_min)), max(0, int(box.y_min))
        x1, y1 = min(width, int(box.x_max)), min(height, int(box.y_max))
        if x1 > x0 and y1 > y0:
            image[y0:y1, x0:x1] = rng.uniform(60, 220, size=3)
    return np.clip(image, 0, 255).astype(np.uint8)


def _random_cloud(rng: np.random.Generator, count: int = 800) -> np.ndarray:
    # Points in front of the camera, a few beyond the 90 m range cut.
    depth = rng.uniform(2.0, 110.0, size=count)
    x = rng.uniform(-0.5, 0.5, size=count) * depth
    y = rng.uniform(-0.3, 0.3, size=count) * depth
    return np.stack([x, y, depth], axis=1).astype(np.float32)


def make_corpus(
    out_dir,
    frames: int = 10,
    seed: int = 0,
    width: int = 640,
    height: int = 480,
    boxes_per_frame: int = 8,
    with_lidar: bool = True,
):
    """Write images, optional clouds and a manifest; returns the manifest path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    calibration_path = None
    if with_lidar:
        (out / "lidar").mkdir(exist_ok=True)
        calibration_path = out / "calibration.txt"
        write_projection(calibration_path, make_projection(width, height))
    records = []
    weathers = list(Weather)
    for i in range(frames):
        frame_id = f"frame_{i:04d}"
        boxes = _random_boxes(rng, width, height, boxes_per_frame)
        image = _render_image(rng, width, height, boxes)
        image_path = out / "images" / f"{frame_id}.png"
        Image.fromarray(image).save(image_path)
        lidar_path = None
        if with_lidar:
            lidar_path = out / "lidar" / f"{frame_id}.bin"
            write_point_cloud(lidar_path, _random_cloud(rng))
        records.append(
            FrameRecord(
                frame_id=frame_id,
                image_path=str(image_path),
                width=width,
                height=height,
                weather=weathers[i % len(weathers)],
                boxes=tuple(boxes),
                lidar_path=str(lidar_path) if lidar_path else None,
                calibration_path=str(calibration_path) if calibration_path else None,
            )
        )
    manifest_path = out / "manifest.jsonl"
    write_manifest(manifest_path, records)
    return manifest_path


def main(argv=None):
    parser = argparse.ArgumentParser(description="generate a synthetic corpus")
    parser.add_argument("out_dir")
    parser.add_argument("--frames", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--width", type=int, default=640)
    parser.add_argument("--height", type=int, default=480)
    parser.add_argument("--no-lidar", action="store_true")
    parser.add_argument(
        "--with-masks",
        action="store_true",
        help="also run the synthetic-backend pipeline to produce masks/",
    )
    args = parser.parse_args(argv)
    manifest = make_corpus(
        args.out_dir,
        frames=args.frames,
        seed=args.seed,
        width=args.width,
        height=args.height,
        with_lidar=not args.no_lidar,
    )
    print(f"manifest: {manifest}")
    if args.with_masks:
        from .pipeline import PipelineConfig, run_pipeline

        config = PipelineConfig(output_root=str(Path(args.out_dir)), backend="synthetic")
        report = run_pipeline(config, manifest)
        print(f"masks: {Path(args.out_dir) / 'masks'} ({report.counters['frames_ok']} ok)")


if __name__ == "__main__":
    main()

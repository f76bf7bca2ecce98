"""Per-weather pixel statistics and distribution-matched dataset splitting.

Statistics are computed at a fixed evaluation resolution (default 384) so
counts are comparable across frames of different sizes. Splitting assigns
frames to train/val/test so that per-stratum frame counts honor the target
ratios exactly (largest-remainder quotas) while a greedy pass balances
class-pixel mass against the per-stratum targets.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .fusion import resize_labels
from .model import IGNORE, FOREGROUND_CLASSES, FrameRecord, OutputClass, Weather

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_RATIOS = (0.50, 0.25, 0.25)


@dataclass
class StatsRow:
    weather: str  # weather value or "total"
    samples: int
    class_pixels: dict  # class name -> pixel count
    ignore_pixels: int
    percentages: dict  # class name -> % of samples * resolution^2


def pixel_percentages(class_pixels: Mapping[str, int], samples: int, resolution: int) -> dict:
    """Class percentages against the full pixel budget of the stratum."""
    denom = samples * resolution * resolution
    if denom == 0:
        return {name: 0.0 for name in class_pixels}
    return {name: 100.0 * count / denom for name, count in class_pixels.items()}


def _class_name(cls: OutputClass) -> str:
    return cls.name.lower()


def _resolve_mask(masks, frame_id: str) -> Optional[np.ndarray]:
    if isinstance(masks, Mapping):
        return masks.get(frame_id)
    path = Path(masks) / f"{frame_id}.png"
    if not path.exists():
        return None
    from .maskio import load_mask

    return load_mask(path)


def compute_stats(
    frames: Sequence[FrameRecord],
    masks: Union[Mapping[str, np.ndarray], str, Path],
    resolution: int = 384,
    resize_mode: str = "soft_argmax",
) -> tuple[list[StatsRow], list[str]]:
    """Per-weather rows plus a total row; returns (rows, missing frame ids).

    Masks are resized to ``resolution`` square before counting. Ignore
    pixels are tallied in their own diagnostic column and excluded from the
    class percentages.
    """
    names = [_class_name(c) for c in OutputClass]
    per_weather: dict[str, dict] = {}
    missing = []
    for frame in frames:
        mask = _resolve_mask(masks, frame.frame_id)
        if mask is None:
            missing.append(frame.frame_id)
            continue
        resized = resize_labels(mask, resolution, resize_mode)
        counts = np.bincount(resized.ravel(), minlength=256)
        bucket = per_weather.setdefault(
            frame.weather.value,
            {"samples": 0, "pixels": {name: 0 for name in names}, "ignore": 0},
        )
        bucket["samples"] += 1
        for cls in OutputClass:
            bucket["pixels"][_class_name(cls)] += int(counts[int(cls)])
        bucket["ignore"] += int(counts[IGNORE])

    rows = []
    total = {"samples": 0, "pixels": {name: 0 for name in names}, "ignore": 0}
    for weather in Weather:
        bucket = per_weather.get(weather.value)
        if bucket is None:
            continue
        rows.append(
            StatsRow(
                weather=weather.value,
                samples=bucket["samples"],
                class_pixels=dict(bucket["pixels"]),
                ignore_pixels=bucket["ignore"],
                percentages=pixel_percentages(bucket["pixels"], bucket["samples"], resolution),
            )
        )
        total["samples"] += bucket["samples"]
        total["ignore"] += bucket["ignore"]
        for name in names:
            total["pixels"][name] += bucket["pixels"][name]
    rows.append(
        StatsRow(
            weather="total",
            samples=total["samples"],
            class_pixels=total["pixels"],
            ignore_pixels=total["ignore"],
            percentages=pixel_percentages(total["pixels"], total["samples"], resolution),
        )
    )
    return rows, missing


@dataclass(frozen=True)
class FrameStat:
    """What the splitter needs to know about one frame."""

    frame_id: str
    weather: Weather
    class_pixels: Mapping[int, int]  # OutputClass id -> pixel count

    @property
    def foreground_total(self) -> int:
        return sum(self.class_pixels.get(int(c), 0) for c in FOREGROUND_CLASSES)


@dataclass
class SplitResult:
    assignment: dict  # frame_id -> split name
    warnings: list = field(default_factory=list)


def _quotas(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder integer quotas summing to n."""
    raw = [n * r for r in ratios]
    counts = [int(x) for x in raw]
    leftover = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def assign_splits(
    frame_stats: Sequence[FrameStat],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> SplitResult:
    """Greedy distribution-matched assignment, stratified by weather.

    Within each stratum the split frame counts follow the ratios exactly
    (largest remainder). Frames are visited largest-foreground first and go
    to the quota-open split with the largest remaining class-pixel deficit;
    exact ties are broken by a seeded draw, so a given seed always
    reproduces the same assignment. Strata with fewer than 4 frames skip
    the pixel greedy and are assigned by ratio alone, with a warning.
    """
    if not frame_stats:
        raise ValueError("cannot split an empty frame list")
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != len(SPLIT_NAMES):
        raise ValueError(f"ratios must be {len(SPLIT_NAMES)} values summing to 1")
    rng = random.Random(seed)
    result = SplitResult(assignment={})
    classes = [int(c) for c in FOREGROUND_CLASSES]

    by_weather: dict[Weather, list[FrameStat]] = {}
    for stat in frame_stats:
        by_weather.setdefault(stat.weather, []).append(stat)

    for weather in sorted(by_weather, key=lambda w: w.value):
        stratum = by_weather[weather]
        quotas = _quotas(len(stratum), ratios)
        remaining = list(quotas)
        if len(stratum) < 4:
            result.warnings.append(
                f"stratum {weather.value} has only {len(stratum)} frames; assigned by ratio alone"
            )
            ordered = sorted(stratum, key=lambda s: s.frame_id)
            cursor = 0
            for split_index, quota in enumerate(quotas):
                for stat in ordered[cursor : cursor + quota]:
                    result.assignment[stat.frame_id] = SPLIT_NAMES[split_index]
                cursor += quota
            continue

        totals = {c: sum(s.class_pixels.get(c, 0) for s in stratum) for c in classes}
        targets = [{c: ratio * totals[c] for c in classes} for ratio in ratios]
        assigned = [{c: 0 for c in classes} for _ in ratios]
        ordered = sorted(stratum, key=lambda s: (-s.foreground_total, s.frame_id))
        for stat in ordered:
            candidates = [i for i in range(len(ratios)) if remaining[i] > 0]
            scores = []
            for i in candidates:
                score = sum(
                    min(stat.class_pixels.get(c, 0), max(0.0, targets[i][c] - assigned[i][c]))
                    for c in classes
                )
                scores.append(score)
            best = max(scores)
            tied = [i for i, s in zip(candidates, scores) if abs(s - best) < 1e-9]
            choice = tied[0] if len(tied) == 1 else rng.choice(tied)
            result.assignment[stat.frame_id] = SPLIT_NAMES[choice]
            remaining[choice] -= 1
            for c in classes:
                assigned[choice][c] += stat.class_pixels.get(c, 0)
    return result


def frame_stats_from_masks(
    frames: Sequence[FrameRecord],
    masks: Union[Mapping[str, np.ndarray], str, Path],
) -> tuple[list[FrameStat], list[str]]:
    """Count per-frame class pixels at native mask resolution."""
    stats = []
    missing = []
    for frame in frames:
        mask = _resolve_mask(masks, frame.frame_id)
        if mask is None:
            missing.append(frame.frame_id)
            continue
        counts = np.bincount(mask.ravel(), minlength=256)
        stats.append(
            FrameStat(
                frame_id=frame.frame_id,
                weather=frame.weather,
                class_pixels={int(c): int(counts[int(c)]) for c in OutputClass},
            )
        )
    return stats, missing


def stratified_split(
    frames: Sequence[FrameRecord],
    masks: Union[Mapping[str, np.ndarray], str, Path],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> SplitResult:
    """Split a manifest by weather-stratified class-pixel matching."""
    stats, missing = frame_stats_from_masks(frames, masks)
    if missing:
        raise ValueError(f"frames without masks cannot be split: {missing[:5]}")
    return assign_splits(stats, ratios, seed)

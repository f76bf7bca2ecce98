"""Curation store: append-only verdict log with a latest-wins view.

Every verdict is one JSON line in the log; replaying the log from the start
reconstructs the exact live state, which keeps curation decisions auditable
and recovery trivial. Later verdicts on a frame supersede earlier ones but
history is never rewritten. Verdicts carrying an idempotency key are
deduplicated, so client retries cannot double-record.
"""
from __future__ import annotations

import json
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .manifest import write_manifest
from .model import FrameRecord, OutputClass

DECISIONS = ("accept", "reject")


@dataclass(frozen=True)
class VerdictRecord:
    seq: int
    frame_id: str
    decision: str
    note: Optional[str]
    reviewer: str
    timestamp: float
    idempotency_key: Optional[str] = None


class UnknownFrameError(KeyError):
    pass


class BadDecisionError(ValueError):
    pass


class ReviewStore:
    """Frames plus verdicts; a single writer lock guards the log."""

    def __init__(
        self,
        frames: Sequence[FrameRecord],
        log_path: Union[str, Path],
        masks: Union[str, Path, None] = None,
    ):
        self.frames = {f.frame_id: f for f in frames}
        self.frame_order = sorted(self.frames)
        self.masks_dir = Path(masks) if masks is not None else None
        self.log_path = Path(log_path)
        self._lock = threading.Lock()
        self._history: list[VerdictRecord] = []
        self._latest: dict[str, VerdictRecord] = {}
        self._by_key: dict[str, VerdictRecord] = {}
        self._pixel_cache: dict[str, dict] = {}
        if self.log_path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self.log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                raw = json.loads(line)
                record = VerdictRecord(
                    seq=int(raw["seq"]),
                    frame_id=raw["frame_id"],
                    decision=raw["decision"],
                    note=raw.get("note"),
                    reviewer=raw.get("reviewer", "unknown"),
                    timestamp=float(raw.get("timestamp", 0.0)),
                    idempotency_key=raw.get("idempotency_key"),
                )
                self._apply(record)

    def _apply(self, record: VerdictRecord) -> None:
        self._history.append(record)
        self._latest[record.frame_id] = record
        if record.idempotency_key:
            self._by_key[record.idempotency_key] = record

    def record_verdict(
        self,
        frame_id: str,
        decision: str,
        note: Optional[str] = None,
        reviewer: str = "anonymous",
        idempotency_key: Optional[str] = None,
    ) -> tuple[VerdictRecord, bool]:
        """Append a verdict; returns (record, created).

        A repeated idempotency key returns the original record unchanged, so
        retried submissions are recorded exactly once.
        """
        if frame_id not in self.frames:
            raise UnknownFrameError(frame_id)
        if decision not in DECISIONS:
            raise BadDecisionError(f"decision must be one of {DECISIONS}, got {decision!r}")
        with self._lock:
            if idempotency_key and idempotency_key in self._by_key:
                return self._by_key[idempotency_key], False
            record = VerdictRecord(
                seq=len(self._history) + 1,
                frame_id=frame_id,
                decision=decision,
                note=note,
                reviewer=reviewer,
                timestamp=time.time(),
                idempotency_key=idempotency_key,
            )
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(asdict(record)) + "\n")
            self._apply(record)
            return record, True

    def verdict_state(self, frame_id: str) -> str:
        record = self._latest.get(frame_id)
        return record.decision if record else "unreviewed"

    def history(self, frame_id: Optional[str] = None) -> list[VerdictRecord]:
        if frame_id is None:
            return list(self._history)
        return [r for r in self._history if r.frame_id == frame_id]

    def acceptance_stats(self) -> dict:
        reviewed = len(self._latest)
        accepted = sum(1 for r in self._latest.values() if r.decision == "accept")
        rate = accepted / reviewed if reviewed else None
        return {"reviewed": reviewed, "accepted": accepted, "acceptance_rate": rate}

    def mask_path(self, frame_id: str) -> Optional[Path]:
        if self.masks_dir is None:
            return None
        path = self.masks_dir / f"{frame_id}.png"
        return path if path.exists() else None

    def class_pixels(self, frame_id: str) -> dict:
        if frame_id in self._pixel_cache:
            return self._pixel_cache[frame_id]
        path = self.mask_path(frame_id)
        counts: dict = {}
        if path is not None:
            from .maskio import load_mask

            values = np.bincount(load_mask(path).ravel(), minlength=256)
            counts = {c.name.lower(): int(values[int(c)]) for c in OutputClass}
        self._pixel_cache[frame_id] = counts
        return counts

    def frame_summary(self, frame_id: str) -> dict:
        frame = self.frames[frame_id]
        return {
            "frame_id": frame_id,
            "weather": frame.weather.value,
            "state": self.verdict_state(frame_id),
            "class_pixels": self.class_pixels(frame_id),
        }

    def list_frames(
        self,
        state: Optional[str] = None,
        weather: Optional[str] = None,
        page: int = 1,
        page_size: int = 50,
    ) -> dict:
        """Frame summaries in frame_id order, filtered then paginated."""
        ids = self.frame_order
        if weather is not None:
            ids = [i for i in ids if self.frames[i].weather.value == weather]
        if state is not None:
            ids = [i for i in ids if self.verdict_state(i) == state]
        total = len(ids)
        start = (page - 1) * page_size
        chunk = ids[start : start + page_size]
        return {
            "frames": [self.frame_summary(i) for i in chunk],
            "total": total,
            "page": page,
            "page_size": page_size,
        }

    def accepted_frames(self) -> list[FrameRecord]:
        return [
            self.frames[fid]
            for fid in self.frame_order
            if self.verdict_state(fid) == "accept"
        ]

    def export_curated_manifest(self, path: Union[str, Path]) -> int:
        """Write the manifest of accepted frames; returns the frame count."""
        accepted = self.accepted_frames()
        write_manifest(path, accepted)
        return len(accepted)

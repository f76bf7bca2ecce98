"""HTTP curation service: frames, overlays, verdicts, acceptance stats.

All endpoints live under /api/v1; a built review UI directory can be mounted
at the root so the service is self-contained for reviewers.
"""
from __future__ import annotations

import io
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Header, HTTPException, Response
from fastapi.responses import FileResponse, PlainTextResponse
from pydantic import BaseModel
from PIL import Image

from .maskio import load_mask, render_overlay
from .review import BadDecisionError, ReviewStore, UnknownFrameError


class VerdictIn(BaseModel):
    decision: str
    note: Optional[str] = None
    idempotency_key: Optional[str] = None


def _png_response(array: np.ndarray) -> Response:
    buf = io.BytesIO()
    Image.fromarray(array).save(buf, format="PNG")
    return Response(content=buf.getvalue(), media_type="image/png")


def create_review_app(store: ReviewStore, ui_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="box2seg review service")

    def _get_frame(frame_id: str):
        frame = store.frames.get(frame_id)
        if frame is None:
            raise HTTPException(status_code=404, detail=f"unknown frame {frame_id!r}")
        return frame

    @app.get("/api/v1/frames")
    def list_frames(
        state: Optional[str] = None,
        weather: Optional[str] = None,
        page: int = 1,
        page_size: int = 50,
    ):
        if page < 1 or page_size < 1:
            raise HTTPException(status_code=400, detail="page and page_size must be >= 1")
        return store.list_frames(state=state, weather=weather, page=page, page_size=page_size)

    @app.get("/api/v1/frames/{frame_id}/image")
    def frame_image(frame_id: str):
        frame = _get_frame(frame_id)
        if not Path(frame.image_path).exists():
            raise HTTPException(status_code=404, detail="image file missing")
        return FileResponse(frame.image_path)

    @app.get("/api/v1/frames/{frame_id}/mask")
    def frame_mask(frame_id: str):
        _get_frame(frame_id)
        path = store.mask_path(frame_id)
        if path is None:
            raise HTTPException(status_code=404, detail="mask file missing")
        return FileResponse(path, media_type="image/png")

    @app.get("/api/v1/frames/{frame_id}/overlay")
    def frame_overlay(frame_id: str):
        frame = _get_frame(frame_id)
        mask_path = store.mask_path(frame_id)
        if mask_path is None or not Path(frame.image_path).exists():
            raise HTTPException(status_code=404, detail="image or mask missing")
        with Image.open(frame.image_path) as img:
            image = np.asarray(img.convert("RGB"))
        mask = load_mask(mask_path)
        if mask.shape != image.shape[:2]:
            resized = Image.fromarray(mask).resize(
                (image.shape[1], image.shape[0]), Image.NEAREST
            )
            mask = np.asarray(resized, dtype=np.uint8)
        return _png_response(render_overlay(image, mask))

    @app.post("/api/v1/frames/{frame_id}/verdict")
    def post_verdict(
        frame_id: str,
        verdict: VerdictIn,
        x_reviewer: str = Header(default="anonymous"),
    ):
        try:
            record, created = store.record_verdict(
                frame_id,
                verdict.decision,
                note=verdict.note,
                reviewer=x_reviewer,
                idempotency_key=verdict.idempotency_key,
            )
        except UnknownFrameError:
            raise HTTPException(status_code=404, detail=f"unknown frame {frame_id!r}")
        except BadDecisionError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {
            "seq": record.seq,
            "frame_id": record.frame_id,
            "decision": record.decision,
            "note": record.note,
            "reviewer": record.reviewer,
            "timestamp": record.timestamp,
            "idempotency_key": record.idempotency_key,
            "created": created,
        }

    @app.get("/api/v1/stats/acceptance")
    def acceptance():
        return store.acceptance_stats()

    @app.get("/api/v1/manifest/curated", response_class=PlainTextResponse)
    def curated_manifest():
        from .manifest import frame_to_dict
        import json

        lines = [json.dumps(frame_to_dict(f)) for f in store.accepted_frames()]
        return "\n".join(lines) + ("\n" if lines else "")

    if ui_dir is not None and Path(ui_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app

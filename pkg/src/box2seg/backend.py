"""Pluggable mask-proposal backends and their wire protocol.

A backend turns an image plus a batch of prompts (boxes, or points for
refinement) into one binary full-frame mask per prompt. The in-process
:class:`SyntheticEllipseBackend` is fully deterministic and serves as the
test oracle; :class:`HttpBackend` speaks a small JSON protocol (version 1)
to an external segmentation server, and :func:`create_backend_app` builds a
reference server around any in-process backend.

Wire format (POST ``{endpoint}/predict``)::

    request:  {"protocol": 1, "image_png_b64": "...",
               "prompts": [{"slot": 0, "type": "box", "box": [x0,y0,x1,y1]},
                           {"slot": 1, "type": "point", "point": [x, y]}]}
    response: {"protocol": 1,
               "masks": [{"slot": 0, "size": [height, width],
                          "rle": [n_off, n_on, ...], "confidence": 1.0}]}

RLE counts are row-major alternating run lengths starting with an "off" run.
"""
from __future__ import annotations

import base64
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .model import BoundingBox

PROTOCOL_VERSION = 1


class BackendError(RuntimeError):
    """Backend unreachable, timed out, or returned a malformed response."""


@dataclass(frozen=True)
class BoxPrompt:
    box: BoundingBox


@dataclass(frozen=True)
class PointPrompt:
    x: float
    y: float


Prompt = Union[BoxPrompt, PointPrompt]


@dataclass
class MaskProposal:
    """Binary per-object mask at working-image resolution."""

    prompt: Prompt
    grid: np.ndarray  # bool, shape (height, width) of the working image
    confidence: Optional[float] = None


class MaskBackend:
    """Interface: one proposal per prompt, in prompt order."""

    def predict(self, image: np.ndarray, prompts: Sequence[Prompt]) -> list[MaskProposal]:
        raise NotImplementedError


def rasterize_inscribed_ellipse(box: BoundingBox, width: int, height: int) -> np.ndarray:
    """Rasterize the axis-aligned ellipse inscribed in ``box``.

    A pixel is on iff its center lies inside the ellipse, so the result is
    always a subset of the box raster. Returns a full-frame bool grid.
    """
    grid = np.zeros((height, width), dtype=bool)
    rx = box.width / 2.0
    ry = box.height / 2.0
    if rx <= 0 or ry <= 0:
        return grid
    cx = (box.x_min + box.x_max) / 2.0
    cy = (box.y_min + box.y_max) / 2.0
    x0 = max(0, int(math.floor(box.x_min)))
    y0 = max(0, int(math.floor(box.y_min)))
    x1 = min(width, int(math.ceil(box.x_max)))
    y1 = min(height, int(math.ceil(box.y_max)))
    if x1 <= x0 or y1 <= y0:
        return grid
    xs = (np.arange(x0, x1) + 0.5 - cx) / rx
    ys = (np.arange(y0, y1) + 0.5 - cy) / ry
    grid[y0:y1, x0:x1] = ys[:, None] ** 2 + xs[None, :] ** 2 <= 1.0
    return grid


def rasterize_disc(cx: float, cy: float, radius: float, width: int, height: int) -> np.ndarray:
    grid = np.zeros((height, width), dtype=bool)
    if radius <= 0:
        return grid
    x0 = max(0, int(math.floor(cx - radius)))
    y0 = max(0, int(math.floor(cy - radius)))
    x1 = min(width, int(math.ceil(cx + radius)))
    y1 = min(height, int(math.ceil(cy + radius)))
    if x1 <= x0 or y1 <= y0:
        return grid
    xs = np.arange(x0, x1) + 0.5 - cx
    ys = np.arange(y0, y1) + 0.5 - cy
    grid[y0:y1, x0:x1] = ys[:, None] ** 2 + xs[None, :] ** 2 <= radius**2
    return grid


class SyntheticEllipseBackend(MaskBackend):
    """Deterministic stand-in for a real segmentation model.

    Box prompts yield the inscribed ellipse; point prompts yield a disc of
    ``point_radius`` pixels around the point. Confidence is always 1.0.
    """

    def __init__(self, point_radius: float = 16.0):
        self.point_radius = point_radius

    def predict(self, image: np.ndarray, prompts: Sequence[Prompt]) -> list[MaskProposal]:
        height, width = image.shape[:2]
        proposals = []
        for prompt in prompts:
            if isinstance(prompt, BoxPrompt):
                grid = rasterize_inscribed_ellipse(prompt.box, width, height)
            elif isinstance(prompt, PointPrompt):
                grid = rasterize_disc(prompt.x, prompt.y, self.point_radius, width, height)
            else:
                raise BackendError(f"unsupported prompt type {type(prompt).__name__}")
            proposals.append(MaskProposal(prompt=prompt, grid=grid, confidence=1.0))
        return proposals


def rle_encode(grid: np.ndarray) -> list[int]:
    """Row-major run lengths, starting with the leading off-run (may be 0)."""
    flat = np.asarray(grid, dtype=bool).ravel()
    if flat.size == 0:
        return []
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return runs


def rle_decode(counts: Sequence[int], height: int, width: int) -> np.ndarray:
    total = sum(counts)
    if total != height * width:
        raise BackendError(f"RLE covers {total} pixels, expected {height * width}")
    flat = np.zeros(height * width, dtype=bool)
    pos = 0
    value = False
    for run in counts:
        if run < 0:
            raise BackendError("negative RLE run length")
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return flat.reshape(height, width)


def _encode_image_png(image: np.ndarray) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _decode_image_png(data_b64: str) -> np.ndarray:
    from PIL import Image

    raw = base64.b64decode(data_b64)
    return np.asarray(Image.open(io.BytesIO(raw)))


def encode_request(image: np.ndarray, prompts: Sequence[Prompt]) -> dict:
    encoded = []
    for slot, prompt in enumerate(prompts):
        if isinstance(prompt, BoxPrompt):
            b = prompt.box
            encoded.append(
                {"slot": slot, "type": "box", "box": [b.x_min, b.y_min, b.x_max, b.y_max]}
            )
        elif isinstance(prompt, PointPrompt):
            encoded.append({"slot": slot, "type": "point", "point": [prompt.x, prompt.y]})
        else:
            raise BackendError(f"unsupported prompt type {type(prompt).__name__}")
    return {
        "protocol": PROTOCOL_VERSION,
        "image_png_b64": _encode_image_png(image),
        "prompts": encoded,
    }


def decode_response(payload: dict, prompts: Sequence[Prompt]) -> list[MaskProposal]:
    """Decode a predict response; every request slot must be answered."""
    if payload.get("protocol") != PROTOCOL_VERSION:
        raise BackendError(f"unsupported protocol version {payload.get('protocol')!r}")
    by_slot = {}
    for entry in payload.get("masks", []):
        try:
            height, width = entry["size"]
            grid = rle_decode(entry["rle"], int(height), int(width))
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed mask entry: {exc}") from exc
        by_slot[entry.get("slot")] = (grid, entry.get("confidence"))
    proposals = []
    for slot, prompt in enumerate(prompts):
        if slot not in by_slot:
            raise BackendError(f"backend response missing slot {slot}")
        grid, confidence = by_slot[slot]
        proposals.append(MaskProposal(prompt=prompt, grid=grid, confidence=confidence))
    return proposals


class HttpBackend(MaskBackend):
    """Client adapter for an external proposal server speaking protocol 1.

    ``client`` may be any httpx-compatible client (a test client included);
    a plain ``httpx.Client`` is created when omitted.
    """

    def __init__(self, endpoint: str = "", client=None, timeout: float = 60.0):
        import httpx

        self.endpoint = endpoint.rstrip("/")
        self._client = client if client is not None else httpx.Client(timeout=timeout)

    def predict(self, image: np.ndarray, prompts: Sequence[Prompt]) -> list[MaskProposal]:
        request = encode_request(image, prompts)
        try:
            response = self._client.post(f"{self.endpoint}/predict", json=request)
        except Exception as exc:  # connection errors, timeouts
            raise BackendError(f"backend request failed: {exc}") from exc
        if response.status_code != 200:
            raise BackendError(f"backend returned HTTP {response.status_code}")
        try:
            payload = response.json()
        except ValueError as exc:
            raise BackendError("backend returned non-JSON body") from exc
        return decode_response(payload, prompts)


def create_backend_app(backend: MaskBackend):
    """Reference proposal server wrapping an in-process backend."""
    from fastapi import FastAPI, HTTPException

    app = FastAPI(title="box2seg proposal backend")

    @app.post("/predict")
    def predict(payload: dict):
        if payload.get("protocol") != PROTOCOL_VERSION:
            raise HTTPException(status_code=400, detail="unsupported protocol version")
        try:
            image = _decode_image_png(payload["image_png_b64"])
            prompts: list[Prompt] = []
            for entry in payload["prompts"]:
                if entry["type"] == "box":
                    x0, y0, x1, y1 = entry["box"]
                    from .model import InputClass

                    prompts.append(
                        BoxPrompt(BoundingBox(x0, y0, x1, y1, InputClass.VEHICLE))
                    )
                elif entry["type"] == "point":
                    x, y = entry["point"]
                    prompts.append(PointPrompt(x, y))
                else:
                    raise ValueError(f"unknown prompt type {entry['type']!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=f"malformed request: {exc}")
        proposals = backend.predict(image, prompts)
        masks = []
        for slot, proposal in enumerate(proposals):
            height, width = proposal.grid.shape
            masks.append(
                {
                    "slot": slot,
                    "size": [height, width],
                    "rle": rle_encode(proposal.grid),
                    "confidence": proposal.confidence,
                }
            )
        return {"protocol": PROTOCOL_VERSION, "masks": masks}

    return app


def make_backend(spec: str) -> MaskBackend:
    """Resolve a backend spec string: ``synthetic`` or an HTTP endpoint URL."""
    if spec == "synthetic":
        return SyntheticEllipseBackend()
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpBackend(spec)
    raise ValueError(f"unknown backend spec {spec!r} (use 'synthetic' or an http(s) URL)")

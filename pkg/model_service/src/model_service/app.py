"""FastAPI application implementing the segmentation/inpainting/metrics wire protocol.

Request and response bodies are validated against the JSON Schema files
shipped with the client package, so both sides of the wire agree by
construction. Model execution is serialized (one request on the accelerator
at a time) with a bounded wait queue; overflow is reported as 429.
"""
from __future__ import annotations

import base64
import binascii
import io
import os
import threading
from contextlib import contextmanager
from typing import Optional

import jsonschema
import numpy as np
from fastapi import Body, FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from PIL import Image

from amodalkit.backends import load_schema

from .attention import AttentionCapture
from .config import ServiceConfig
from .engines import EngineSet, ModelNotReady, build_engines, latent_grid
from .tokens import subject_token_indices


def _error_body(kind: str, message: str) -> dict:
    return {"error": {"type": kind, "message": message}}


def _decode_image(b64: str, what: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError):
        raise HTTPException(400, detail=_error_body("bad_base64", f"invalid base64 in {what}"))
    try:
        return np.asarray(Image.open(io.BytesIO(raw)).convert("RGB")).copy()
    except Exception:
        raise HTTPException(400, detail=_error_body("bad_png", f"cannot decode PNG in {what}"))


def _decode_mask(b64: str, what: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError):
        raise HTTPException(400, detail=_error_body("bad_base64", f"invalid base64 in {what}"))
    try:
        return np.asarray(Image.open(io.BytesIO(raw)).convert("L")) > 0
    except Exception:
        raise HTTPException(400, detail=_error_body("bad_png", f"cannot decode PNG in {what}"))


def _encode_png(arr: np.ndarray, mode: str) -> str:
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _validate(payload: dict, schema_name: str) -> None:
    try:
        jsonschema.validate(payload, load_schema(schema_name))
    except jsonschema.ValidationError as exc:
        raise HTTPException(
            400, detail=_error_body("schema_violation", f"{schema_name}: {exc.message}")
        )


class RequestGate:
    """Serialized execution with a bounded wait queue (backpressure -> 429)."""

    def __init__(self, max_queue: int):
        self._slots = threading.Semaphore(max_queue + 1)
        self._running = threading.Lock()

    @contextmanager
    def admit(self):
        if not self._slots.acquire(blocking=False):
            raise HTTPException(429, detail=_error_body("overloaded", "request queue is full"))
        try:
            with self._running:
                yield
        finally:
            self._slots.release()


def create_app(cfg: Optional[ServiceConfig] = None) -> FastAPI:
    cfg = cfg or ServiceConfig()
    app = FastAPI(title="model-service")
    gate = RequestGate(cfg.max_queue)
    state: dict = {"engines": None}

    def engines() -> EngineSet:
        if state["engines"] is None:
            try:
                state["engines"] = build_engines(cfg)
            except ModelNotReady as exc:
                raise HTTPException(503, detail=_error_body("model_not_ready", str(exc)))
        return state["engines"]

    @app.exception_handler(HTTPException)
    async def http_error(request: Request, exc: HTTPException):
        detail = exc.detail if isinstance(exc.detail, dict) else _error_body("error", str(exc.detail))
        return JSONResponse(status_code=exc.status_code, content=detail)

    @app.exception_handler(Exception)
    async def unhandled_error(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content=_error_body("internal", str(exc)))

    @app.middleware("http")
    async def bearer_auth(request: Request, call_next):
        token = os.environ.get(cfg.auth_env, "")
        if token:
            header = request.headers.get("Authorization", "")
            if header != f"Bearer {token}":
                return JSONResponse(
                    status_code=401, content=_error_body("unauthorized", "missing or bad token")
                )
        return await call_next(request)

    @app.post("/segment")
    def segment(payload: dict = Body(...)):
        _validate(payload, "segment_request")
        image = _decode_image(payload["image_png_b64"], "image_png_b64")
        with gate.admit():
            mask, confidence = engines().segmentation.segment(image, payload["label"])
        response = {
            "mask_png_b64": _encode_png(mask.astype(np.uint8) * 255, "L"),
            "confidence": float(confidence),
        }
        _validate(response, "segment_response")
        return response

    @app.post("/inpaint")
    def inpaint(payload: dict = Body(...)):
        _validate(payload, "inpaint_request")
        image = _decode_image(payload["image_png_b64"], "image_png_b64")
        mask = _decode_mask(payload["mask_png_b64"], "mask_png_b64")
        if mask.shape != image.shape[:2]:
            raise HTTPException(
                400, detail=_error_body("shape_mismatch", "mask dims do not match image")
            )
        h, w = image.shape[:2]
        lw, lh = latent_grid(w, h)

        capture = None
        if payload["want_attention"]:
            collect_self = cfg.self_refined and lw * lh <= cfg.max_self_cells
            capture = AttentionCapture(
                latent_w=lw,
                latent_h=lh,
                subject_tokens=subject_token_indices(payload["prompt"]),
                total_steps=payload["steps"],
                last_n=payload["attn_last_n"],
                collect_self=collect_self,
            )
        with gate.admit():
            out = engines().inpaint.inpaint(
                image, mask, payload["prompt"], payload["steps"], payload["seed"], capture
            )
        response = {"image_png_b64": _encode_png(out, "RGB")}
        if capture is not None:
            cross, refined = capture.finalize()
            attention = {
                "latent_w": lw,
                "latent_h": lh,
                "cross_f32_b64": base64.b64encode(cross.astype("<f4").tobytes()).decode("ascii"),
            }
            if refined is not None:
                attention["self_refined_f32_b64"] = base64.b64encode(
                    refined.astype("<f4").tobytes()
                ).decode("ascii")
            response["attention"] = attention
        _validate(response, "inpaint_response")
        return response

    @app.post("/metrics")
    def metrics(payload: dict = Body(...)):
        _validate(payload, "metrics_request")
        a = _decode_image(payload["a_png_b64"], "a_png_b64")
        response: dict = {}
        with gate.admit():
            eng = engines().metrics
            if "label" in payload:
                response["clip"] = float(eng.clip_score(a, payload["label"]))
            if "b_png_b64" in payload:
                b = _decode_image(payload["b_png_b64"], "b_png_b64")
                if b.shape != a.shape:
                    raise HTTPException(
                        400, detail=_error_body("shape_mismatch", "a/b dims differ")
                    )
                response["lpips"] = float(eng.lpips(a, b))
                response["feature_sim"] = float(eng.feature_sim(a, b))
        _validate(response, "metrics_response")
        return response

    return app

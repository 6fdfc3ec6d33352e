"""Canned request/response pair generation for client protocol tests.

The dump runs real requests through the ASGI app with stub engines, so the
recorded responses are exactly what a live deployment would send. Clients can
replay the pairs without any model (or even this service) installed.
"""
from __future__ import annotations

import base64
import io
import json
from pathlib import Path

import jsonschema
import numpy as np
from fastapi.testclient import TestClient
from PIL import Image

from amodalkit.backends import load_schema

from .app import create_app
from .config import ServiceConfig

ENDPOINTS = ("segment", "inpaint", "metrics")


def _png_b64(arr: np.ndarray, mode: str) -> str:
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _demo_scene() -> tuple[np.ndarray, np.ndarray]:
    image = np.full((40, 48, 3), 235, dtype=np.uint8)
    image[8:32, 10:30] = (70, 110, 190)
    mask = np.zeros((40, 48), dtype=bool)
    mask[12:28, 22:42] = True
    return image, mask


def build_requests() -> dict[str, dict]:
    image, mask = _demo_scene()
    return {
        "segment": {"image_png_b64": _png_b64(image, "RGB"), "label": "blue box"},
        "inpaint": {
            "image_png_b64": _png_b64(image, "RGB"),
            "mask_png_b64": _png_b64(mask.astype(np.uint8) * 255, "L"),
            "prompt": "a matte blue storage box on a plain floor",
            "steps": 28,
            "seed": 0,
            "want_attention": True,
            "attn_last_n": 15,
        },
        "metrics": {
            "a_png_b64": _png_b64(image, "RGB"),
            "b_png_b64": _png_b64(image, "RGB"),
            "label": "blue box",
        },
    }


def conformance_fixture_dump(out_dir, cfg: ServiceConfig | None = None) -> list[Path]:
    """Write one schema-validated request/response JSON pair per endpoint."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    client = TestClient(create_app(cfg or ServiceConfig()))
    written: list[Path] = []
    for endpoint, request in build_requests().items():
        jsonschema.validate(request, load_schema(f"{endpoint}_request"))
        response = client.post(f"/{endpoint}", json=request)
        response.raise_for_status()
        body = response.json()
        jsonschema.validate(body, load_schema(f"{endpoint}_response"))
        req_path = out / f"{endpoint}_request.json"
        resp_path = out / f"{endpoint}_response.json"
        req_path.write_text(json.dumps(request, indent=2), encoding="utf-8")
        resp_path.write_text(json.dumps(body, indent=2), encoding="utf-8")
        written.extend([req_path, resp_path])
    return written

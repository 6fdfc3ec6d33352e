"""HTTP clients for the reasoning, segmentation, inpainting, and metric services.

All clients share the retry/backoff policy (429 and 5xx retry, 401/403 fail
fast), read their bearer token from an environment variable at request time,
and bound in-flight requests with a semaphore. Response payloads are schema-
validated and shape-checked before anything is returned; the inpainting
client additionally re-imposes the mask-false pass-through on the decoded
image rather than trusting the server.
"""
from __future__ import annotations

import json
import os
import threading
import time
from typing import Optional

import numpy as np
import requests

from ..alpha import AttentionBundle
from ..imaging import ensure_rgb, image_from_png_bytes, png_bytes
from ..masks import BinaryMask, mask_from_png_bytes, mask_png_bytes
from .base import (
    AuthError,
    InpaintingBackend,
    InpaintParams,
    MetricBackend,
    ProtocolError,
    ReasoningBackend,
    SegmentationBackend,
    TransportError,
    b64encode,
    decode_attention,
    validate_payload,
)

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


class HttpClientBase:
    def __init__(
        self,
        endpoint: str,
        auth_env: str = "AMODAL_API_TOKEN",
        timeout_s: float = 60.0,
        max_retries: int = 3,
        backoff_s: float = 0.5,
        max_in_flight: int = 4,
        session: Optional[requests.Session] = None,
    ):
        if not endpoint:
            raise ValueError("endpoint must be configured")
        self.endpoint = endpoint.rstrip("/")
        self.auth_env = auth_env
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._gate = threading.Semaphore(max_in_flight)
        self._session = session or requests.Session()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.endpoint}{path}"
        attempts = 0
        last_error: Optional[Exception] = None
        with self._gate:
            while attempts <= self.max_retries:
                if attempts:
                    time.sleep(self.backoff_s * (2 ** (attempts - 1)))
                attempts += 1
                try:
                    resp = self._session.post(
                        url, json=payload, headers=self._headers(), timeout=self.timeout_s
                    )
                except requests.RequestException as exc:
                    last_error = exc
                    continue
                if resp.status_code in (401, 403):
                    raise AuthError(f"{url} rejected credentials ({resp.status_code})")
                if resp.status_code in RETRYABLE_STATUS:
                    last_error = TransportError(
                        f"{url} returned {resp.status_code}", attempts=attempts
                    )
                    continue
                if resp.status_code != 200:
                    raise ProtocolError(f"{url} returned {resp.status_code}", resp.text[:120])
                try:
                    return resp.json()
                except json.JSONDecodeError as exc:
                    raise ProtocolError(f"{url} returned non-JSON body", resp.text[:120]) from exc
        raise TransportError(
            f"{url} failed after {attempts} attempts: {last_error}", attempts=attempts
        )


def _to_openai_messages(messages: list[dict]) -> list[dict]:
    converted = []
    for msg in messages:
        content = msg["content"]
        if isinstance(content, list):
            parts = []
            for part in content:
                if part.get("type") == "image_png_b64":
                    parts.append(
                        {
                            "type": "image_url",
                            "image_url": {"url": "data:image/png;base64," + part["data"]},
                        }
                    )
                else:
                    parts.append(part)
            converted.append({"role": msg["role"], "content": parts})
        else:
            converted.append(dict(msg))
    return converted


class HttpReasoningClient(HttpClientBase, ReasoningBackend):
    """Chat-completions-style client (images embedded as data URLs)."""

    def __init__(self, endpoint: str, model: str = "gpt-4o", **kwargs):
        super().__init__(endpoint, **kwargs)
        self.model = model

    def chat(self, messages: list[dict], temperature: float = 0.0, seed: Optional[int] = None) -> str:
        payload = {
            "model": self.model,
            "messages": _to_openai_messages(messages),
            "temperature": temperature,
        }
        if seed is not None:
            payload["seed"] = seed
        body = self._post("/chat/completions", payload)
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(
                "chat response missing choices[0].message.content",
                json.dumps(body, default=str)[:120],
            ) from exc
        if not isinstance(text, str):
            raise ProtocolError("chat response content is not text")
        return text


def decode_segment_response(payload: dict, image_shape: tuple[int, int]) -> tuple[BinaryMask, float]:
    validate_payload(payload, "segment_response")
    from .base import b64decode

    mask = mask_from_png_bytes(b64decode(payload["mask_png_b64"], "segment mask"))
    if mask.data.shape != image_shape:
        raise ProtocolError(
            f"segment mask dims {mask.data.shape} do not match image {image_shape}"
        )
    return mask, float(payload["confidence"])


class HttpSegmentationClient(HttpClientBase, SegmentationBackend):
    def segment(self, image: np.ndarray, label: str) -> tuple[BinaryMask, float]:
        arr = ensure_rgb(image)
        payload = {"image_png_b64": b64encode(png_bytes(arr)), "label": label}
        return decode_segment_response(self._post("/segment", payload), arr.shape[:2])


def decode_inpaint_response(
    payload: dict, image: np.ndarray, mask: BinaryMask
) -> tuple[np.ndarray, Optional[AttentionBundle]]:
    """Validate, decode, and enforce the strict inpainting contract on a response."""
    validate_payload(payload, "inpaint_response")
    from .base import b64decode

    out = image_from_png_bytes(b64decode(payload["image_png_b64"], "inpaint image"))
    if out.shape != image.shape:
        raise ProtocolError(f"inpaint output dims {out.shape} do not match input {image.shape}")
    # diffusion decoders drift off-mask; pin mask-false pixels to the input
    out[~mask.data] = image[~mask.data]
    bundle = decode_attention(payload["attention"]) if "attention" in payload else None
    return out, bundle


class HttpInpaintingClient(HttpClientBase, InpaintingBackend):
    def inpaint(
        self, image: np.ndarray, mask: BinaryMask, prompt: str, params: InpaintParams
    ) -> tuple[np.ndarray, Optional[AttentionBundle]]:
        arr = ensure_rgb(image)
        if mask.data.shape != arr.shape[:2]:
            raise ValueError("mask dims do not match image")
        payload = {
            "image_png_b64": b64encode(png_bytes(arr)),
            "mask_png_b64": b64encode(mask_png_bytes(mask)),
            "prompt": prompt,
            "steps": params.steps,
            "seed": params.seed,
            "want_attention": params.want_attention,
            "attn_last_n": params.attn_last_n,
        }
        return decode_inpaint_response(self._post("/inpaint", payload), arr, mask)


def decode_metrics_response(payload: dict) -> dict:
    validate_payload(payload, "metrics_response")
    return payload


class HttpMetricsClient(HttpClientBase, MetricBackend):
    def _call(self, a: np.ndarray, b: Optional[np.ndarray], label: Optional[str], key: str) -> float:
        payload: dict = {"a_png_b64": b64encode(png_bytes(ensure_rgb(a)))}
        if b is not None:
            payload["b_png_b64"] = b64encode(png_bytes(ensure_rgb(b)))
        if label is not None:
            payload["label"] = label
        body = decode_metrics_response(self._post("/metrics", payload))
        if key not in body:
            raise ProtocolError(f"metrics response missing {key!r}", json.dumps(body)[:120])
        return float(body[key])

    def clip_score(self, image: np.ndarray, label: str) -> float:
        return self._call(image, None, label, "clip")

    def lpips(self, a: np.ndarray, b: np.ndarray) -> float:
        return self._call(a, b, None, "lpips")

    def feature_sim(self, a: np.ndarray, b: np.ndarray) -> float:
        return self._call(a, b, None, "feature_sim")

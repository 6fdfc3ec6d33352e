"""Backend interfaces, wire-format helpers, and shared error types."""
from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import jsonschema
import numpy as np

from ..alpha import AttentionBundle
from ..masks import BinaryMask


class BackendError(Exception):
    """Base class for backend failures."""


class TransportError(BackendError):
    """Network-level failure after exhausting retries."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class AuthError(BackendError):
    """Server rejected the bearer token (401/403)."""


class ProtocolError(BackendError):
    """Response violated the wire schema or shape laws."""

    def __init__(self, message: str, payload_excerpt: str = ""):
        super().__init__(message if not payload_excerpt else f"{message}: {payload_excerpt}")
        self.payload_excerpt = payload_excerpt


@dataclass(frozen=True)
class InpaintParams:
    steps: int = 28
    seed: int = 0
    want_attention: bool = True
    attn_last_n: int = 15

    def __post_init__(self):
        if self.steps < 1 or self.seed < 0 or self.attn_last_n < 1:
            raise ValueError(f"bad inpaint params: {self}")


def latent_grid(width: int, height: int) -> tuple[int, int]:
    """Latent cell dims for a pixel canvas: ceil(dim / 8) per side (VAE downsampling)."""
    return math.ceil(width / 8), math.ceil(height / 8)


class ReasoningBackend:
    """Chat-style multimodal model; deterministic at temperature 0."""

    def chat(self, messages: list[dict], temperature: float = 0.0, seed: Optional[int] = None) -> str:
        raise NotImplementedError


class SegmentationBackend:
    """Open-vocabulary segmentation: label text to pixel mask."""

    def segment(self, image: np.ndarray, label: str) -> tuple[BinaryMask, float]:
        raise NotImplementedError


class InpaintingBackend:
    """Prompted mask inpainting; mask-false pixels come back unchanged."""

    def inpaint(
        self, image: np.ndarray, mask: BinaryMask, prompt: str, params: InpaintParams
    ) -> tuple[np.ndarray, Optional[AttentionBundle]]:
        raise NotImplementedError


class MetricBackend:
    """Neural similarity metrics served by an external model host."""

    def clip_score(self, image: np.ndarray, label: str) -> float:
        raise NotImplementedError

    def lpips(self, a: np.ndarray, b: np.ndarray) -> float:
        raise NotImplementedError

    def feature_sim(self, a: np.ndarray, b: np.ndarray) -> float:
        raise NotImplementedError


def b64encode(raw: bytes) -> str:
    return base64.b64encode(raw).decode("ascii")


def b64decode(data: str, what: str) -> bytes:
    try:
        return base64.b64decode(data, validate=True)
    except Exception as exc:
        raise ProtocolError(f"invalid base64 in {what}", str(data)[:80]) from exc


_SCHEMA_CACHE: dict[str, dict] = {}


def load_schema(name: str) -> dict:
    """Load a shared wire schema (e.g. 'inpaint_response') from package data."""
    if name not in _SCHEMA_CACHE:
        path = resources.files("amodalkit.backends") / "schemas" / f"{name}.schema.json"
        _SCHEMA_CACHE[name] = json.loads(path.read_text(encoding="utf-8"))
    return _SCHEMA_CACHE[name]


def validate_payload(payload: dict, schema_name: str) -> None:
    try:
        jsonschema.validate(payload, load_schema(schema_name))
    except jsonschema.ValidationError as exc:
        raise ProtocolError(
            f"payload violates {schema_name} schema: {exc.message}",
            json.dumps(payload, default=str)[:120],
        ) from exc


def decode_attention(payload: dict) -> AttentionBundle:
    """Decode and shape-check the attention object of an inpaint response."""
    lw, lh = payload["latent_w"], payload["latent_h"]
    raw = b64decode(payload["cross_f32_b64"], "cross attention blob")
    if len(raw) != lw * lh * 4:
        raise ProtocolError(
            f"cross blob length {len(raw)} != latent grid {lw}x{lh} * 4 bytes"
        )
    cross = np.frombuffer(raw, dtype="<f4").reshape(lh, lw)
    self_refined = None
    if "self_refined_f32_b64" in payload:
        raw_s = b64decode(payload["self_refined_f32_b64"], "self attention blob")
        if len(raw_s) != lw * lh * 4:
            raise ProtocolError(
                f"self blob length {len(raw_s)} != latent grid {lw}x{lh} * 4 bytes"
            )
        self_refined = np.frombuffer(raw_s, dtype="<f4").reshape(lh, lw)
    try:
        return AttentionBundle(lw, lh, cross, self_refined)
    except ValueError as exc:
        raise ProtocolError(f"attention payload invalid: {exc}") from exc

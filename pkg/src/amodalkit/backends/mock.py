"""Deterministic in-process backends for desk-scale runs and golden tests."""
from __future__ import annotations

import hashlib
import json
import threading
from typing import Optional

import numpy as np
from scipy import ndimage

from ..alpha import AttentionBundle
from ..imaging import ensure_rgb
from ..masks import BinaryMask
from .base import (
    BackendError,
    InpaintingBackend,
    InpaintParams,
    MetricBackend,
    ReasoningBackend,
    SegmentationBackend,
    latent_grid,
)


def message_digest(messages: list[dict]) -> str:
    """Stable digest of a chat message list (covers embedded image bytes and text)."""
    canonical = json.dumps(messages, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class MockReasoning(ReasoningBackend):
    """Replays canned responses keyed by message digest.

    In strict mode an unknown digest is an error naming the digest; otherwise
    the configured fallback text is returned.
    """

    def __init__(self, fixtures: dict[str, str], strict: bool = True, fallback: Optional[str] = None):
        self.fixtures = dict(fixtures)
        self.strict = strict
        self.fallback = fallback
        self.calls: list[str] = []

    @classmethod
    def from_file(cls, path, strict: bool = True, fallback: Optional[str] = None) -> "MockReasoning":
        with open(path, "r", encoding="utf-8") as f:
            return cls(json.load(f), strict=strict, fallback=fallback)

    def chat(self, messages: list[dict], temperature: float = 0.0, seed: Optional[int] = None) -> str:
        digest = message_digest(messages)
        self.calls.append(digest)
        if digest in self.fixtures:
            return self.fixtures[digest]
        if self.strict or self.fallback is None:
            raise BackendError(f"no reasoning fixture registered for digest {digest}")
        return self.fallback


class MockSegmentation(SegmentationBackend):
    """Two modes: canned masks by label, or chroma keying against label colors.

    Chroma mode marks pixels within a Euclidean RGB distance of the label's
    configured color; it is meant for synthetic test scenes built from flat
    color regions.
    """

    def __init__(
        self,
        fixture_masks: Optional[dict[str, BinaryMask]] = None,
        chroma_colors: Optional[dict[str, tuple[int, int, int]]] = None,
        chroma_distance: float = 32.0,
    ):
        if (fixture_masks is None) == (chroma_colors is None):
            raise ValueError("configure exactly one of fixture_masks / chroma_colors")
        self.fixture_masks = fixture_masks
        self.chroma_colors = chroma_colors
        self.chroma_distance = float(chroma_distance)

    def segment(self, image: np.ndarray, label: str) -> tuple[BinaryMask, float]:
        arr = ensure_rgb(image)
        if self.fixture_masks is not None:
            if label not in self.fixture_masks:
                raise BackendError(f"no segmentation fixture for label {label!r}")
            mask = self.fixture_masks[label]
            if mask.data.shape != arr.shape[:2]:
                raise BackendError(f"fixture mask dims for {label!r} do not match image")
            return BinaryMask(mask.data.copy()), 1.0
        if label not in self.chroma_colors:
            raise BackendError(f"no chroma color for label {label!r}")
        color = np.asarray(self.chroma_colors[label], dtype=np.float64)
        dist = np.sqrt(((arr.astype(np.float64) - color) ** 2).sum(axis=2))
        return BinaryMask(dist <= self.chroma_distance), 1.0


def _prompt_color(prompt: str) -> np.ndarray:
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    return np.frombuffer(digest[:3], dtype=np.uint8).copy()


class MockInpainting(InpaintingBackend):
    """Fills the masked region with a prompt-derived color and fabricates an
    attention bundle as the normalized interior distance transform of the
    filled region on the latent grid."""

    def __init__(self):
        self.calls = 0
        self._lock = threading.Lock()

    def inpaint(
        self, image: np.ndarray, mask: BinaryMask, prompt: str, params: InpaintParams
    ) -> tuple[np.ndarray, Optional[AttentionBundle]]:
        arr = ensure_rgb(image)
        if mask.data.shape != arr.shape[:2]:
            raise BackendError("mask dims do not match image")
        with self._lock:
            self.calls += 1
        out = arr.copy()
        out[mask.data] = _prompt_color(prompt)
        if not params.want_attention:
            return out, None

        h, w = arr.shape[:2]
        lw, lh = latent_grid(w, h)
        # latent cell is "filled" when any pixel of its 8x8 block is masked
        padded = np.zeros((lh * 8, lw * 8), dtype=bool)
        padded[:h, :w] = mask.data
        coarse = padded.reshape(lh, 8, lw, 8).any(axis=(1, 3))
        if coarse.any():
            heat = ndimage.distance_transform_edt(coarse)
            heat = (heat / heat.max()).astype(np.float32)
        else:
            heat = np.zeros((lh, lw), np.float32)
        refined = ndimage.uniform_filter(heat, size=3, mode="nearest")
        if refined.max() > 0:
            refined = refined / refined.max()
        return out, AttentionBundle(lw, lh, heat, refined.astype(np.float32))


class MockMetrics(MetricBackend):
    """Cheap pixel statistics satisfying the interface laws (lpips(x,x)=0, sim(x,x)=1)."""

    def clip_score(self, image: np.ndarray, label: str) -> float:
        arr = ensure_rgb(image)
        digest = hashlib.sha256(label.encode("utf-8") + arr.tobytes()).digest()
        return 20.0 + 10.0 * digest[0] / 255.0

    def lpips(self, a: np.ndarray, b: np.ndarray) -> float:
        pa, pb = ensure_rgb(a).astype(np.float64), ensure_rgb(b).astype(np.float64)
        if pa.shape != pb.shape:
            raise BackendError("lpips inputs must share dims")
        return float(np.abs(pa - pb).mean() / 255.0)

    def feature_sim(self, a: np.ndarray, b: np.ndarray) -> float:
        return 1.0 - self.lpips(a, b)

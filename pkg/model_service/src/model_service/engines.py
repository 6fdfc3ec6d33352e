"""Model engines behind the service endpoints.

The ``stub`` family is fully deterministic and weight-free: it exists so the
wire protocol, attention aggregation, and metric laws can be exercised and
conformance fixtures generated on machines without GPUs or model downloads.
Real engines are resolved through the same registry; a deployment that names
real model identifiers without the weights installed surfaces as 503.
"""
from __future__ import annotations

import hashlib
import math
from typing import Optional

import numpy as np
from scipy import ndimage

from .attention import AttentionCapture
from .config import ServiceConfig
from .tokens import subject_token_indices, tokenize


class ModelNotReady(Exception):
    """The configured model backend cannot serve requests."""


def latent_grid(width: int, height: int) -> tuple[int, int]:
    return math.ceil(width / 8), math.ceil(height / 8)


class StubSegmentationEngine:
    """Foreground = pixels far from the dominant border color."""

    COLOR_DISTANCE = 40.0

    def segment(self, image: np.ndarray, label: str) -> tuple[np.ndarray, float]:
        border = np.concatenate(
            [image[0], image[-1], image[:, 0], image[:, -1]], axis=0
        ).astype(np.float64)
        bg = np.median(border, axis=0)
        dist = np.sqrt(((image.astype(np.float64) - bg) ** 2).sum(axis=2))
        mask = dist > self.COLOR_DISTANCE
        coverage = float(mask.mean())
        confidence = max(0.0, min(1.0, 0.25 + 0.5 * coverage))
        return mask, confidence


def _prompt_color(prompt: str) -> np.ndarray:
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    return np.frombuffer(digest[4:7], dtype=np.uint8).astype(np.float64)


class StubInpaintEngine:
    """Deterministic mask fill that emits per-step attention like a generator would.

    Subject-token cross maps follow the masked region's interior distance
    field, sharpened as steps progress (later steps carry finer detail);
    non-subject tokens get a flat low response. The self-attention matrix is
    a row-stochastic local smoothing over latent cells.
    """

    def __init__(self, cfg: ServiceConfig):
        self.cfg = cfg
        self.layers = (0, 1)  # stand-ins for the generator's multi-stream blocks

    def inpaint(
        self,
        image: np.ndarray,
        mask: np.ndarray,
        prompt: str,
        steps: int,
        seed: int,
        capture: Optional[AttentionCapture],
    ) -> np.ndarray:
        h, w = image.shape[:2]
        lw, lh = latent_grid(w, h)

        padded = np.zeros((lh * 8, lw * 8), dtype=bool)
        padded[:h, :w] = mask
        coarse = padded.reshape(lh, 8, lw, 8).any(axis=(1, 3))
        field = ndimage.distance_transform_edt(coarse)
        if field.max() > 0:
            field = field / field.max()

        if capture is not None:
            n_tokens = max(1, len(tokenize(prompt)))
            subjects = set(capture.subject_tokens)
            self_matrix = self._smoothing_matrix(lw, lh) if capture.collect_self else None
            for step in range(steps):
                sharp = field ** (1.0 + step / max(1, steps))
                token_maps = np.full((n_tokens, lh, lw), 0.05, dtype=np.float64)
                for t in range(n_tokens):
                    if t in subjects:
                        token_maps[t] = sharp
                for layer in self.layers:
                    capture.record_cross(step, layer, token_maps)
                if self_matrix is not None:
                    capture.record_self(step, self_matrix)

        out = image.copy()
        color = _prompt_color(prompt)
        fine_field = ndimage.distance_transform_edt(mask) if mask.any() else np.zeros((h, w))
        if fine_field.max() > 0:
            fine_field = fine_field / fine_field.max()
        shading = (0.6 + 0.4 * fine_field)[..., None]
        filled = np.clip(color[None, None, :] * shading, 0, 255).astype(np.uint8)
        out[mask] = filled[mask]
        return out

    @staticmethod
    def _smoothing_matrix(lw: int, lh: int) -> np.ndarray:
        cells = lw * lh
        m = np.zeros((cells, cells), dtype=np.float64)
        for y in range(lh):
            for x in range(lw):
                i = y * lw + x
                m[i, i] = 2.0
                for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < lh and 0 <= nx < lw:
                        m[i, ny * lw + nx] = 1.0
        return m / m.sum(axis=1, keepdims=True)


class StubMetricsEngine:
    """Pixel-statistics metrics that honor the interface laws exactly."""

    @staticmethod
    def _block_mean(image: np.ndarray, size: int = 32) -> np.ndarray:
        from PIL import Image

        img = Image.fromarray(image, mode="RGB").resize((size, size), Image.BILINEAR)
        return np.asarray(img, dtype=np.float64) / 255.0

    def clip_score(self, image: np.ndarray, label: str) -> float:
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        tone = float(image.astype(np.float64).mean()) / 255.0
        return 20.0 + 8.0 * (digest[0] / 255.0) + 4.0 * tone

    def lpips(self, a: np.ndarray, b: np.ndarray) -> float:
        fa, fb = self._block_mean(a), self._block_mean(b)
        return float(np.sqrt(((fa - fb) ** 2).mean()))

    def feature_sim(self, a: np.ndarray, b: np.ndarray) -> float:
        fa, fb = self._block_mean(a).ravel(), self._block_mean(b).ravel()
        na, nb = float(np.linalg.norm(fa)), float(np.linalg.norm(fb))
        if na == 0.0 and nb == 0.0:
            return 1.0
        if na == 0.0 or nb == 0.0:
            return 0.0
        cos = float(fa @ fb / (na * nb))
        return max(0.0, min(1.0, 0.5 * (1.0 + cos)))


class EngineSet:
    def __init__(self, segmentation, inpaint, metrics):
        self.segmentation = segmentation
        self.inpaint = inpaint
        self.metrics = metrics


def build_engines(cfg: ServiceConfig) -> EngineSet:
    if cfg.engine == "stub":
        return EngineSet(StubSegmentationEngine(), StubInpaintEngine(cfg), StubMetricsEngine())
    # real model families plug in here; without their weights the deployment
    # is configured-but-not-ready, which the API reports as 503
    raise ModelNotReady(
        f"engine {cfg.engine!r} (inpaint={cfg.inpaint_model!r}, "
        f"segmentation={cfg.segmentation_model!r}) is not loadable in this deployment"
    )

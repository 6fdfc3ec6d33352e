"""Attention-guided alpha extraction and RGBA composition.

The generator's aggregated cross-attention heatmap (on the latent grid) is
upsampled, normalized, and thresholded into a coarse object mask. That mask
mostly covers freshly synthesized pixels, so it is fused with the placed
visible mask before a GrabCut refinement pass produces the final binary alpha.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import grabcut
from .imaging import ensure_rgb, ensure_rgba
from .masks import BinaryMask, StructuringElement, dilate, erode, mask_subtract, mask_union

log = logging.getLogger(__name__)

ATTN_MAGIC = "attention-bundle-v1"


@dataclass
class AttentionBundle:
    """Aggregated attention heatmaps on the generator's latent grid.

    ``cross`` is already averaged over the final N denoising steps and the
    relevant layers; ``self_refined`` is an optional variant propagated
    through self-attention by the producer.
    """

    latent_width: int
    latent_height: int
    cross: np.ndarray
    self_refined: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.latent_width < 1 or self.latent_height < 1:
            raise ValueError("latent grid dims must be positive")
        shape = (self.latent_height, self.latent_width)
        self.cross = np.ascontiguousarray(self.cross, dtype=np.float32)
        if self.cross.shape != shape:
            raise ValueError(f"cross grid shape {self.cross.shape} != {shape}")
        grids = [self.cross]
        if self.self_refined is not None:
            self.self_refined = np.ascontiguousarray(self.self_refined, dtype=np.float32)
            if self.self_refined.shape != shape:
                raise ValueError(f"self_refined grid shape {self.self_refined.shape} != {shape}")
            grids.append(self.self_refined)
        for g in grids:
            if not np.all(np.isfinite(g)) or g.min() < 0.0 or g.max() > 1.0:
                raise ValueError("attention values must be finite and within [0, 1]")

    @classmethod
    def zeros(cls, latent_width: int, latent_height: int) -> "AttentionBundle":
        return cls(latent_width, latent_height, np.zeros((latent_height, latent_width), np.float32))


@dataclass
class AlphaConfig:
    threshold: float = 0.4
    threshold_mode: str = "fixed"  # fixed | otsu
    fuse_visible: bool = True
    use_self_refined: bool = False
    grabcut_iters: int = 5
    grabcut_components: int = 5
    grabcut_gamma: float = 50.0
    erode_fg: int = 3
    dilate_bg_band: int = 20
    attn_last_n: int = 15
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.threshold_mode not in ("fixed", "otsu"):
            raise ValueError(f"unknown threshold mode {self.threshold_mode!r}")
        if self.grabcut_iters < 0 or self.erode_fg < 0 or self.dilate_bg_band < 0:
            raise ValueError("iteration counts and radii must be >= 0")
        if self.attn_last_n < 1:
            raise ValueError("attn_last_n must be >= 1")


def upsample_attention(
    b: AttentionBundle, width: int, height: int, use_self_refined: bool = False
) -> np.ndarray:
    """Bilinear upsample of the selected latent grid to pixel resolution.

    Uses half-pixel centers (identity when target dims equal latent dims).
    Falls back to the cross grid when the self-refined variant is absent.
    """
    if width < 1 or height < 1:
        raise ValueError("target dims must be positive")
    grid = b.cross
    if use_self_refined:
        if b.self_refined is None:
            log.debug("self_refined requested but absent; using cross grid")
        else:
            grid = b.self_refined
    src = grid.astype(np.float64)
    sh, sw = src.shape

    xs = (np.arange(width) + 0.5) * (sw / width) - 0.5
    ys = (np.arange(height) + 0.5) * (sh / height) - 0.5
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, sw - 1)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    y1 = np.minimum(y0 + 1, sh - 1)
    fx = np.clip(xs - x0, 0.0, 1.0)
    fy = np.clip(ys - y0, 0.0, 1.0)

    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bottom = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    out = top * (1 - fy)[:, None] + bottom * fy[:, None]
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def minmax_normalize(m: np.ndarray) -> np.ndarray:
    """Rescale to span [0, 1]; constant maps pass through unchanged."""
    lo = float(m.min())
    hi = float(m.max())
    if hi <= lo:
        return m.astype(np.float32)
    return ((m - lo) / (hi - lo)).astype(np.float32)


def otsu_threshold_bin(m: np.ndarray) -> int:
    """Otsu bin index k* over a 256-bin histogram of [0, 1] values.

    Foreground is ``bin > k*``; ties resolve to the lowest k.
    """
    bins = np.minimum((np.asarray(m, dtype=np.float64) * 256.0).astype(np.int64), 255)
    hist = np.bincount(bins.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    centers = np.arange(256, dtype=np.float64)
    best_k, best_var = 0, -1.0
    w0, sum0 = 0.0, 0.0
    grand = float((hist * centers).sum())
    for k in range(256):
        w0 += hist[k]
        sum0 += hist[k] * k
        w1 = total - w0
        if w0 == 0.0 or w1 == 0.0:
            continue
        mu0 = sum0 / w0
        mu1 = (grand - sum0) / w1
        var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best_var:
            best_var = var
            best_k = k
    return best_k


def threshold_map(m: np.ndarray, cfg: AlphaConfig) -> BinaryMask:
    """Binarize a [0, 1] float map by the configured rule."""
    arr = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("threshold_map expects values in [0, 1]")
    if cfg.threshold_mode == "otsu":
        k = otsu_threshold_bin(arr)
        bins = np.minimum((arr * 256.0).astype(np.int64), 255)
        return BinaryMask(bins > k)
    return BinaryMask(arr >= cfg.threshold)


def fuse_with_visible(m_c: BinaryMask, visible_canvas: BinaryMask) -> BinaryMask:
    """Union of the attention-derived mask with the known visible geometry."""
    return mask_union(m_c, visible_canvas)


def refine_alpha(img: np.ndarray, fused: BinaryMask, cfg: AlphaConfig) -> BinaryMask:
    """GrabCut cleanup of the fused mask.

    Trimap: eroded fused core is pinned foreground, a dilated band around the
    fused region is probable background, everything beyond is pinned
    background. The pinned core can never be dropped from the result.
    """
    arr = ensure_rgb(img)
    if arr.shape[:2] != fused.data.shape:
        raise ValueError("image dims do not match fused mask")
    if fused.is_empty():
        log.warning("refine_alpha: empty fused mask, returning empty alpha")
        return BinaryMask.empty(fused.width, fused.height)
    if cfg.grabcut_iters == 0:
        return BinaryMask(fused.data.copy())

    sure_fg = erode(fused, StructuringElement(cfg.erode_fg))
    band = dilate(fused, StructuringElement(cfg.dilate_bg_band))
    if not (~band.data).any() and fused.data.all():
        log.warning("refine_alpha: no background region available, returning fused mask")
        return BinaryMask(fused.data.copy())

    tri = np.full(fused.data.shape, grabcut.SURE_BG, np.uint8)
    tri[band.data] = grabcut.PROB_BG
    tri[fused.data] = grabcut.PROB_FG
    tri[sure_fg.data] = grabcut.SURE_FG

    result = grabcut.grabcut_run(
        arr,
        tri,
        iters=cfg.grabcut_iters,
        components=cfg.grabcut_components,
        gamma=cfg.grabcut_gamma,
        seed=cfg.seed,
    )
    return mask_union(result, sure_fg)


def compose_rgba(completed: np.ndarray, alpha: BinaryMask) -> np.ndarray:
    """Attach a binary alpha channel: 255 where the mask is set, 0 elsewhere."""
    arr = ensure_rgb(completed)
    if arr.shape[:2] != alpha.data.shape:
        raise ValueError("completed image dims do not match alpha mask")
    out = np.empty((arr.shape[0], arr.shape[1], 4), dtype=np.uint8)
    out[:, :, :3] = arr
    out[:, :, 3] = alpha.data.astype(np.uint8) * 255
    return ensure_rgba(out)


def extract_alpha(
    completed: np.ndarray,
    bundle: AttentionBundle,
    visible_canvas: BinaryMask,
    cfg: AlphaConfig,
) -> BinaryMask:
    """Full alpha path: upsample -> normalize -> threshold -> fuse -> refine.

    With fuse_visible off the result depends on attention alone, which
    typically under-covers the object's original visible pixels.
    """
    arr = ensure_rgb(completed)
    h, w = arr.shape[:2]
    if visible_canvas.data.shape != (h, w):
        raise ValueError("visible mask dims do not match completed image")
    heat = upsample_attention(bundle, w, h, use_self_refined=cfg.use_self_refined)
    m_c = threshold_map(minmax_normalize(heat), cfg)
    fused = fuse_with_visible(m_c, visible_canvas) if cfg.fuse_visible else m_c
    if fused.is_empty():
        log.warning("extract_alpha: nothing above threshold and no visible fusion; empty alpha")
        return fused
    return refine_alpha(arr, fused, cfg)


def save_attention(bundle: AttentionBundle, path) -> None:
    """Write the offline debugging form: one JSON header line + raw LE float32 blobs."""
    header = {
        "format": ATTN_MAGIC,
        "latent_width": bundle.latent_width,
        "latent_height": bundle.latent_height,
        "has_self_refined": bundle.self_refined is not None,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8") + b"\n")
        f.write(bundle.cross.astype("<f4").tobytes())
        if bundle.self_refined is not None:
            f.write(bundle.self_refined.astype("<f4").tobytes())


def load_attention(path) -> AttentionBundle:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        if header.get("format") != ATTN_MAGIC:
            raise ValueError(f"not an attention bundle file: {path}")
        lw, lh = header["latent_width"], header["latent_height"]
        n = lw * lh * 4
        cross = np.frombuffer(f.read(n), dtype="<f4").reshape(lh, lw)
        self_refined = None
        if header.get("has_self_refined"):
            self_refined = np.frombuffer(f.read(n), dtype="<f4").reshape(lh, lw)
    return AttentionBundle(lw, lh, cross, self_refined)

"""Image buffers and masked-input preparation for the synthesis stage."""
from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .masks import BinaryMask, CanvasPlacement, Rect

WHITE = (255, 255, 255)

Color = tuple[int, int, int]


def ensure_rgb(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ValueError(f"expected uint8 RGB array (H, W, 3), got {arr.dtype} {arr.shape}")
    return arr


def ensure_rgba(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 4 or arr.dtype != np.uint8:
        raise ValueError(f"expected uint8 RGBA array (H, W, 4), got {arr.dtype} {arr.shape}")
    return arr


def _check_color(bg: Color) -> np.ndarray:
    c = np.asarray(bg, dtype=np.int64)
    if c.shape != (3,) or c.min() < 0 or c.max() > 255:
        raise ValueError(f"bad color {bg}")
    return c.astype(np.uint8)


def extract_visible(img: np.ndarray, visible: BinaryMask, bg: Color = WHITE) -> np.ndarray:
    """Keep only mask-true pixels; everything else becomes the neutral background."""
    arr = ensure_rgb(img)
    if arr.shape[:2] != visible.data.shape:
        raise ValueError(
            f"image dims {arr.shape[1]}x{arr.shape[0]} do not match mask "
            f"{visible.width}x{visible.height}"
        )
    out = np.empty_like(arr)
    out[:] = _check_color(bg)
    out[visible.data] = arr[visible.data]
    return out


def place_on_canvas(vis_only: np.ndarray, p: CanvasPlacement, bg: Color = WHITE) -> np.ndarray:
    """Place an original-frame image at its footprint inside the expanded canvas."""
    arr = ensure_rgb(vis_only)
    if arr.shape[0] != p.orig_height or arr.shape[1] != p.orig_width:
        raise ValueError(
            f"image dims {arr.shape[1]}x{arr.shape[0]} do not match original frame "
            f"{p.orig_width}x{p.orig_height}"
        )
    out = np.empty((p.new_height, p.new_width, 3), dtype=np.uint8)
    out[:] = _check_color(bg)
    out[p.offset_y : p.offset_y + p.orig_height, p.offset_x : p.offset_x + p.orig_width] = arr
    return out


def crop(img: np.ndarray, r: Rect) -> np.ndarray:
    arr = np.asarray(img)
    if r.x < 0 or r.y < 0 or r.x + r.width > arr.shape[1] or r.y + r.height > arr.shape[0]:
        raise ValueError("crop rect outside image")
    return arr[r.y : r.y + r.height, r.x : r.x + r.width].copy()


def load_image(path) -> np.ndarray:
    """Load any raster file as 8-bit RGB (higher bit depths are downconverted)."""
    return np.asarray(Image.open(path).convert("RGB")).copy()


def save_png(img: np.ndarray, path) -> None:
    arr = np.asarray(img)
    if arr.ndim == 3 and arr.shape[2] == 3:
        Image.fromarray(ensure_rgb(arr), mode="RGB").save(path, format="PNG")
    elif arr.ndim == 3 and arr.shape[2] == 4:
        Image.fromarray(ensure_rgba(arr), mode="RGBA").save(path, format="PNG")
    else:
        raise ValueError(f"expected RGB or RGBA array, got shape {arr.shape}")


def png_bytes(img: np.ndarray) -> bytes:
    arr = np.asarray(img)
    buf = io.BytesIO()
    mode = "RGBA" if arr.ndim == 3 and arr.shape[2] == 4 else "RGB"
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def image_from_png_bytes(raw: bytes) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(raw)).convert("RGB")).copy()

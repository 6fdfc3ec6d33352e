"""Binary masks, canvas-expansion geometry, and inpainting-region composition."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image

EXPANSION_CAP = 2.0


class Edge(Enum):
    LEFT = "left"
    RIGHT = "right"
    TOP = "top"
    BOTTOM = "bottom"


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class BinaryMask:
    """Row-major boolean pixel grid. Immutable by convention: operations return new masks."""

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask dims must be positive, got {arr.shape}")
        self.data = arr.astype(bool, copy=False)

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=bool))

    @classmethod
    def from_points(cls, width: int, height: int, points: Iterable[tuple[int, int]]) -> "BinaryMask":
        """Build a mask from (x, y) pixel coordinates."""
        m = np.zeros((height, width), dtype=bool)
        for x, y in points:
            m[y, x] = True
        return cls(m)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def count(self) -> int:
        return int(self.data.sum())

    def is_empty(self) -> bool:
        return not self.data.any()

    def same_shape(self, other: "BinaryMask") -> bool:
        return self.data.shape == other.data.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self):  # masks are mutable ndarrays underneath; keep them unhashable
        raise TypeError("BinaryMask is not hashable")

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, {self.count()} set)"


@dataclass(frozen=True)
class ExpansionSpec:
    """Per-edge canvas growth as fractions of the original width/height."""

    left: float = 0.0
    right: float = 0.0
    top: float = 0.0
    bottom: float = 0.0

    def __post_init__(self):
        for name in ("left", "right", "top", "bottom"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"expansion {name} must be finite, got {v}")
            if v < 0.0 or v > EXPANSION_CAP:
                raise ValueError(
                    f"expansion {name}={v} outside [0, {EXPANSION_CAP}]"
                )

    def is_zero(self) -> bool:
        return self.left == 0.0 and self.right == 0.0 and self.top == 0.0 and self.bottom == 0.0


@dataclass(frozen=True)
class CanvasPlacement:
    """Where the original image footprint sits inside the expanded canvas."""

    orig_width: int
    orig_height: int
    new_width: int
    new_height: int
    offset_x: int
    offset_y: int

    def __post_init__(self):
        if self.orig_width < 1 or self.orig_height < 1:
            raise ValueError("original dims must be positive")
        if self.new_width < self.orig_width or self.new_height < self.orig_height:
            raise ValueError("expanded canvas smaller than original footprint")
        if self.offset_x < 0 or self.offset_y < 0:
            raise ValueError("negative placement offset")
        if self.offset_x + self.orig_width > self.new_width:
            raise ValueError("footprint exceeds canvas on the right")
        if self.offset_y + self.orig_height > self.new_height:
            raise ValueError("footprint exceeds canvas at the bottom")

    def is_identity(self) -> bool:
        return (
            self.new_width == self.orig_width
            and self.new_height == self.orig_height
            and self.offset_x == 0
            and self.offset_y == 0
        )


@dataclass(frozen=True)
class StructuringElement:
    """Euclidean disk used for dilation."""

    radius: int

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("rect dims must be >= 1")


def compute_canvas(orig_width: int, orig_height: int, e: ExpansionSpec) -> CanvasPlacement:
    """Expanded canvas dims and footprint offset for per-edge fractional growth.

    Rounding is half-up on each quantity independently; because the new
    dimension is rounded on the full sum, any mismatch lands in the
    right/bottom margins, never as a negative margin.
    """
    if orig_width < 1 or orig_height < 1:
        raise ValueError("original dims must be positive")
    new_w = _round_half_up(orig_width * (1.0 + e.left + e.right))
    new_h = _round_half_up(orig_height * (1.0 + e.top + e.bottom))
    off_x = _round_half_up(orig_width * e.left)
    off_y = _round_half_up(orig_height * e.top)
    return CanvasPlacement(orig_width, orig_height, new_w, new_h, off_x, off_y)


def boundary_mask(p: CanvasPlacement) -> BinaryMask:
    """Mask of the newly added border area: true outside the original footprint."""
    m = np.ones((p.new_height, p.new_width), dtype=bool)
    m[p.offset_y : p.offset_y + p.orig_height, p.offset_x : p.offset_x + p.orig_width] = False
    return BinaryMask(m)


def place_mask(m: BinaryMask, p: CanvasPlacement) -> BinaryMask:
    """Translate an original-frame mask onto the expanded canvas."""
    if m.width != p.orig_width or m.height != p.orig_height:
        raise ValueError(
            f"mask dims {m.width}x{m.height} do not match original frame "
            f"{p.orig_width}x{p.orig_height}"
        )
    out = np.zeros((p.new_height, p.new_width), dtype=bool)
    out[p.offset_y : p.offset_y + p.orig_height, p.offset_x : p.offset_x + p.orig_width] = m.data
    return BinaryMask(out)


def disk_offsets(radius: int) -> list[tuple[int, int]]:
    """All (dy, dx) with Euclidean norm <= radius."""
    r2 = radius * radius
    return [
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if dy * dy + dx * dx <= r2
    ]


def dilate(m: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Morphological dilation by a Euclidean disk. Pixels outside the grid stay background."""
    if se.radius == 0:
        return BinaryMask(m.data.copy())
    h, w = m.data.shape
    out = np.zeros_like(m.data)
    for dy, dx in disk_offsets(se.radius):
        ys0, ys1 = max(0, -dy), min(h, h - dy)
        xs0, xs1 = max(0, -dx), min(w, w - dx)
        if ys0 >= ys1 or xs0 >= xs1:
            continue
        out[ys0 + dy : ys1 + dy, xs0 + dx : xs1 + dx] |= m.data[ys0:ys1, xs0:xs1]
    return BinaryMask(out)


def _check_same_dims(a: BinaryMask, b: BinaryMask, op: str) -> None:
    if not a.same_shape(b):
        raise ValueError(
            f"{op}: dimension mismatch {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def mask_union(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same_dims(a, b, "mask_union")
    return BinaryMask(a.data | b.data)


def mask_subtract(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same_dims(a, b, "mask_subtract")
    return BinaryMask(a.data & ~b.data)


def mask_intersect(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same_dims(a, b, "mask_intersect")
    return BinaryMask(a.data & b.data)


def mask_complement(a: BinaryMask) -> BinaryMask:
    return BinaryMask(~a.data)


def erode(m: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Erosion by duality: pixels whose disk neighborhood is fully foreground.

    Outside the grid counts as background, so foreground touching the border erodes.
    """
    return mask_complement(dilate(mask_complement(m), se))


def compose_inpaint_mask(
    occluders: Sequence[BinaryMask],
    visible: BinaryMask,
    p: CanvasPlacement,
    se: StructuringElement,
    protect_visible: bool = True,
) -> BinaryMask:
    """Region the generator must synthesize: dilated occluders plus the new border area.

    Occluder masks are lifted onto the expanded canvas before dilation so the
    dilation can spill into the added border. With protect_visible, pixels of
    the placed visible mask are subtracted so known object evidence is never
    scheduled for synthesis.
    """
    for i, occ in enumerate(occluders):
        if occ.width != p.orig_width or occ.height != p.orig_height:
            raise ValueError(f"occluder {i} dims do not match original frame")
    if visible.width != p.orig_width or visible.height != p.orig_height:
        raise ValueError("visible mask dims do not match original frame")

    out = boundary_mask(p)
    for occ in occluders:
        out = mask_union(out, dilate(place_mask(occ, p), se))
    if protect_visible:
        out = mask_subtract(out, place_mask(visible, p))
    return out


def bbox(m: BinaryMask) -> Optional[Rect]:
    """Tight bounding rectangle of the set pixels; None for an empty mask."""
    ys, xs = np.nonzero(m.data)
    if ys.size == 0:
        return None
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return Rect(x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def edges_touched(r: Rect, width: int, height: int, tol: int = 2) -> set[Edge]:
    """Image edges the rect comes within tol pixels of."""
    if r.x < 0 or r.y < 0 or r.x + r.width > width or r.y + r.height > height:
        raise ValueError("rect not inside image")
    touched: set[Edge] = set()
    if r.x <= tol:
        touched.add(Edge.LEFT)
    if width - (r.x + r.width) <= tol:
        touched.add(Edge.RIGHT)
    if r.y <= tol:
        touched.add(Edge.TOP)
    if height - (r.y + r.height) <= tol:
        touched.add(Edge.BOTTOM)
    return touched


def default_dilation_radius(orig_width: int, orig_height: int) -> int:
    """Proportional dilation radius, floored at 5 px so small images still get a seam margin."""
    return max(5, _round_half_up(0.015 * max(orig_width, orig_height)))


def mask_to_png(m: BinaryMask, path) -> None:
    Image.fromarray(m.data.astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def mask_from_png(path) -> BinaryMask:
    """Load a single-channel PNG; any nonzero sample is foreground."""
    img = Image.open(path).convert("L")
    return BinaryMask(np.asarray(img) > 0)


def mask_png_bytes(m: BinaryMask) -> bytes:
    import io

    buf = io.BytesIO()
    Image.fromarray(m.data.astype(np.uint8) * 255, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def mask_from_png_bytes(raw: bytes) -> BinaryMask:
    import io

    img = Image.open(io.BytesIO(raw)).convert("L")
    return BinaryMask(np.asarray(img) > 0)

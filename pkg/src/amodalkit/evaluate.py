"""Visible-region consistency evaluation: native SSIM, manifests, batch runner.

Ground truth for hidden regions does not exist, so every metric compares the
visible parts of the original object against the same region of the completed
image. SSIM is computed natively; CLIP/LPIPS/feature similarity are model
inferences and come from a MetricBackend when one is configured.
"""
from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .backends import MetricBackend
from .config import Backends, PipelineConfig
from .imaging import crop, load_image
from .masks import BinaryMask, CanvasPlacement, Rect, bbox, mask_from_png
from .pipeline import PipelineResult, run_pipeline
from .agents import TaskQuery

CSV_HEADER = ["case", "clip", "lpips", "feature_sim", "ssim", "runtime_s"]
METRIC_KEYS = ("clip", "lpips", "feature_sim", "ssim")

_LUMA = np.array([0.299, 0.587, 0.114])


def _to_luma(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 3:
        return arr @ _LUMA
    raise ValueError(f"expected gray or RGB image, got shape {arr.shape}")


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    win = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    return win / win.sum()


def _windowed_mean(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    rows = np.apply_along_axis(lambda r: np.convolve(r, win, mode="valid"), 1, img)
    return np.apply_along_axis(lambda c: np.convolve(c, win, mode="valid"), 0, rows)


def ssim(a: np.ndarray, b: np.ndarray, k1: float = 0.01, k2: float = 0.03, level: float = 255.0) -> float:
    """Mean structural similarity over valid 11x11 Gaussian windows (sigma 1.5) on luma."""
    la, lb = _to_luma(a), _to_luma(b)
    if la.shape != lb.shape:
        raise ValueError(f"ssim inputs differ in dims: {la.shape} vs {lb.shape}")
    win = _gaussian_window()
    if la.shape[0] < win.size or la.shape[1] < win.size:
        raise ValueError(f"image {la.shape} smaller than the {win.size}x{win.size} ssim window")
    c1 = (k1 * level) ** 2
    c2 = (k2 * level) ** 2
    mu_a = _windowed_mean(la, win)
    mu_b = _windowed_mean(lb, win)
    var_a = _windowed_mean(la * la, win) - mu_a ** 2
    var_b = _windowed_mean(lb * lb, win) - mu_b ** 2
    cov = _windowed_mean(la * lb, win) - mu_a * mu_b
    ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    )
    return float(ssim_map.mean())


def visible_region_pair(
    original: np.ndarray,
    visible: BinaryMask,
    completed: np.ndarray,
    p: CanvasPlacement,
    bg: tuple[int, int, int] = (255, 255, 255),
) -> tuple[np.ndarray, np.ndarray]:
    """Comparable crops of the visible object region from original and completed images.

    Both crops cover the visible-mask bounding box; pixels outside the visible
    mask are set to the neutral background in both so only object evidence is
    compared. The completed side is sampled at the placement offset.
    """
    if original.shape[:2] != (p.orig_height, p.orig_width):
        raise ValueError("original image dims do not match placement")
    if completed.shape[:2] != (p.new_height, p.new_width):
        raise ValueError("completed image dims do not match canvas")
    box = bbox(visible)
    if box is None:
        raise ValueError("visible mask is empty")
    region = visible.data[box.y : box.y + box.height, box.x : box.x + box.width]
    a = crop(original, box)
    b = crop(completed, Rect(box.x + p.offset_x, box.y + p.offset_y, box.width, box.height))
    color = np.asarray(bg, dtype=np.uint8)
    a[~region] = color
    b[~region] = color
    return a, b


@dataclass(frozen=True)
class EvalCase:
    image: str
    query: str
    visible_mask: Optional[str] = None
    category: Optional[str] = None


def load_manifest(path) -> list[EvalCase]:
    """Parse a JSON Lines manifest; parse errors name the offending line."""
    cases: list[EvalCase] = []
    allowed = {"image", "query", "visible_mask", "category"}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise ValueError(f"{path}: line {lineno}: expected an object")
            unknown = set(obj) - allowed
            if unknown:
                raise ValueError(f"{path}: line {lineno}: unknown keys {sorted(unknown)}")
            if "image" not in obj or "query" not in obj:
                raise ValueError(f"{path}: line {lineno}: 'image' and 'query' are required")
            cases.append(EvalCase(**obj))
    if not cases:
        raise ValueError(f"{path}: manifest contains no cases")
    return cases


def evaluate_case(
    case: EvalCase,
    result: PipelineResult,
    metric_backend: Optional[MetricBackend] = None,
    original: Optional[np.ndarray] = None,
) -> dict:
    """Per-case metric row. SSIM is always computed; neural metrics only when a
    backend is present, and their individual failures do not abort the row."""
    if original is None:
        original = load_image(case.image)
    a, b = visible_region_pair(original, result.visible_mask, result.completed, result.placement)
    row: dict = {"case": case.image, "clip": None, "lpips": None, "feature_sim": None}
    row["ssim"] = ssim(a, b)
    if metric_backend is not None:
        for key, call in (
            ("clip", lambda: metric_backend.clip_score(b, case.query)),
            ("lpips", lambda: metric_backend.lpips(a, b)),
            ("feature_sim", lambda: metric_backend.feature_sim(a, b)),
        ):
            try:
                row[key] = float(call())
            except Exception as exc:
                row[f"{key}_error"] = str(exc)
    return row


@dataclass
class EvalReport:
    rows: list[dict] = field(default_factory=list)  # manifest order, one per case
    aggregates: dict = field(default_factory=dict)
    failure_count: int = 0

    def recompute_aggregates(self) -> None:
        self.aggregates = {}
        for key in METRIC_KEYS:
            values = [r[key] for r in self.rows if r.get(key) is not None]
            self.aggregates[f"mean_{key}"] = (sum(values) / len(values)) if values else None
        self.aggregates["cases"] = len(self.rows)
        self.aggregates["failures"] = self.failure_count


def run_benchmark(cases: list[EvalCase], cfg: PipelineConfig, backends: Backends) -> EvalReport:
    """Run the pipeline over every case with bounded parallelism.

    Rows keep manifest order regardless of completion order; failed cases are
    recorded with their error and excluded from the aggregates.
    """
    if not cases:
        raise ValueError("empty case list")

    def one(case: EvalCase) -> dict:
        start = time.perf_counter()
        try:
            image = load_image(case.image)
            visible = mask_from_png(case.visible_mask) if case.visible_mask else None
            result = run_pipeline(TaskQuery(image, case.query), cfg, backends, visible_mask=visible)
            row = evaluate_case(case, result, backends.metrics, original=image)
        except Exception as exc:
            return {
                "case": case.image,
                "clip": None,
                "lpips": None,
                "feature_sim": None,
                "ssim": None,
                "runtime_s": time.perf_counter() - start,
                "error": str(exc),
            }
        row["runtime_s"] = time.perf_counter() - start
        return row

    with ThreadPoolExecutor(max_workers=cfg.eval_parallelism) as pool:
        rows = list(pool.map(one, cases))

    report = EvalReport(rows=rows, failure_count=sum(1 for r in rows if r.get("error")))
    report.recompute_aggregates()
    return report


def write_report(report: EvalReport, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "report.json"
    csv_path = out / "report.csv"
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(
            {"rows": report.rows, "aggregates": report.aggregates}, f, indent=2, sort_keys=True
        )
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for row in report.rows:
            writer.writerow(
                [row["case"]]
                + ["" if row.get(k) is None else f"{row[k]:.6f}" for k in METRIC_KEYS]
                + [f"{row['runtime_s']:.4f}"]
            )
    return json_path, csv_path

"""Command-line entry points: full completion runs, benchmark evaluation, and
spatial-reasoning inspection with selectable boundary strategies.

Exit codes: 0 success, 1 pipeline failure, 2 usage/config error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .agents import TaskQuery
from .alpha import upsample_attention
from .config import (
    BOUNDARY_STRATEGIES,
    Backends,
    PipelineConfig,
    build_backends,
    load_config,
)
from .evaluate import load_manifest, run_benchmark, write_report
from .imaging import load_image, save_png
from .masks import (
    EXPANSION_CAP,
    StructuringElement,
    compose_inpaint_mask,
    compute_canvas,
    default_dilation_radius,
    mask_to_png,
)
from .pipeline import PipelineStageError, analyze_spatial, run_pipeline

EDGE_NAMES = ("left", "right", "top", "bottom")


class UsageError(Exception):
    pass


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON (flags override file values)")
    p.add_argument("--backend", choices=["mock", "http"], help="backend mode override")
    p.add_argument("--fixtures", help="mock reasoning fixtures JSON (digest -> reply)")
    p.add_argument("--dilation-radius", type=int, help="occluder dilation radius in pixels")
    p.add_argument("--threshold", type=float, help="fixed attention threshold in (0, 1)")
    p.add_argument("--threshold-mode", choices=["fixed", "otsu"])
    p.add_argument(
        "--protect-visible",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="subtract the visible mask from the inpainting region",
    )
    p.add_argument(
        "--fuse-visible",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="fuse the attention mask with the visible mask (disable for the attention-only ablation)",
    )
    p.add_argument(
        "--single-agent",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="use the combined single-prompt baseline instead of dedicated agents",
    )
    p.add_argument("--attn-last-n", type=int, help="denoising steps aggregated into attention maps")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, help="denoising step count")
    p.add_argument("--boundary-strategy", choices=list(BOUNDARY_STRATEGIES))


def _apply_overrides(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    backend_updates = {}
    if args.backend:
        backend_updates["mode"] = args.backend
    if args.fixtures:
        backend_updates["reasoning_fixtures"] = args.fixtures
    alpha_updates = {}
    if args.threshold is not None:
        alpha_updates["threshold"] = args.threshold
    if args.threshold_mode is not None:
        alpha_updates["threshold_mode"] = args.threshold_mode
    if args.fuse_visible is not None:
        alpha_updates["fuse_visible"] = args.fuse_visible
    if args.attn_last_n is not None:
        alpha_updates["attn_last_n"] = args.attn_last_n
    top_updates = {}
    if args.dilation_radius is not None:
        top_updates["dilation_radius"] = args.dilation_radius
    if args.protect_visible is not None:
        top_updates["protect_visible"] = args.protect_visible
    if args.single_agent is not None:
        top_updates["single_agent"] = args.single_agent
    if args.seed is not None:
        top_updates["seed"] = args.seed
    if args.steps is not None:
        top_updates["steps"] = args.steps
    if args.boundary_strategy is not None:
        top_updates["boundary_strategy"] = args.boundary_strategy
    if backend_updates:
        top_updates["backends"] = dataclasses.replace(cfg.backends, **backend_updates)
    if alpha_updates:
        top_updates["alpha"] = dataclasses.replace(cfg.alpha, **alpha_updates)
    return dataclasses.replace(cfg, **top_updates) if top_updates else cfg


def _setup(args: argparse.Namespace) -> tuple[PipelineConfig, Backends]:
    try:
        cfg = load_config(args.config) if args.config else PipelineConfig()
        cfg = _apply_overrides(cfg, args)
        return cfg, build_backends(cfg.backends)
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from exc


def _load_query(args: argparse.Namespace) -> TaskQuery:
    path = Path(args.image)
    if not path.is_file():
        raise UsageError(f"image not found: {path}")
    try:
        image = load_image(path)
    except Exception as exc:
        raise UsageError(f"cannot read image {path}: {exc}") from exc
    try:
        return TaskQuery(image, args.query)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _dump_intermediates(result, out_path: Path) -> Path:
    dump = out_path.parent / f"{out_path.stem}_intermediates"
    dump.mkdir(parents=True, exist_ok=True)
    mask_to_png(result.visible_mask, dump / "visible_mask.png")
    mask_to_png(result.visible_mask_canvas, dump / "visible_mask_canvas.png")
    for i, occ in enumerate(result.occluder_masks):
        mask_to_png(occ, dump / f"occluder_{i:02d}.png")
    mask_to_png(result.inpaint_mask, dump / "inpaint_mask.png")
    mask_to_png(result.alpha, dump / "alpha.png")
    save_png(result.masked_input, dump / "masked_input.png")
    save_png(result.completed, dump / "completed.png")
    (dump / "prompt.txt").write_text(result.prompt.prompt_text + "\n", encoding="utf-8")
    if result.attention is not None:
        heat = upsample_attention(
            result.attention, result.placement.new_width, result.placement.new_height
        )
        gray = (heat * 255.0 + 0.5).astype(np.uint8)
        from PIL import Image

        Image.fromarray(gray, mode="L").save(dump / "attention.png", format="PNG")
    return dump


def cmd_complete(args: argparse.Namespace) -> int:
    cfg, backends = _setup(args)
    query = _load_query(args)
    out_path = Path(args.out)
    if out_path.parent and not out_path.parent.is_dir():
        raise UsageError(f"output directory does not exist: {out_path.parent}")
    result = run_pipeline(query, cfg, backends)
    save_png(result.rgba, out_path)
    if args.dump_intermediates:
        dump = _dump_intermediates(result, out_path)
        print(f"intermediates: {dump}")
    print(f"wrote {out_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg, backends = _setup(args)
    try:
        cases = load_manifest(args.manifest)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    report = run_benchmark(cases, cfg, backends)
    json_path, csv_path = write_report(report, args.out_dir)
    print(f"wrote {json_path} and {csv_path}")
    for row in report.rows:
        if row.get("error"):
            print(f"FAILED {row['case']}: {row['error']}", file=sys.stderr)
    if report.failure_count and not args.allow_failures:
        print(f"{report.failure_count} case(s) failed", file=sys.stderr)
        return 1
    return 0


def cmd_inspect_mask(args: argparse.Namespace) -> int:
    cfg, backends = _setup(args)
    query = _load_query(args)
    analysis = analyze_spatial(query, cfg, backends)
    h, w = query.image.shape[:2]

    expansion = analysis.boundary.expansion
    if analysis.proportions_known:
        directions = [name for name in EDGE_NAMES if getattr(expansion, name) > 0.0]
        proportions = {name: getattr(expansion, name) for name in EDGE_NAMES}
    else:
        directions = [e.value for e in analysis.touched]
        directions = [name for name in EDGE_NAMES if name in directions]
        proportions = None  # bbox contact cannot size the expansion

    placement = compute_canvas(w, h, expansion)
    radius = cfg.dilation_radius if cfg.dilation_radius is not None else default_dilation_radius(w, h)
    inpaint = compose_inpaint_mask(
        list(analysis.occluder_masks),
        analysis.visible_mask,
        placement,
        StructuringElement(radius),
        protect_visible=cfg.protect_visible,
    )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mask_to_png(analysis.visible_mask, out_dir / "visible_mask.png")
    mask_to_png(inpaint, out_dir / "inpaint_mask.png")

    summary = {
        "target": analysis.occlusion.target_label,
        "occluders": list(analysis.occlusion.occluder_labels),
        "strategy": cfg.boundary_strategy,
        "touched_edges": [name for name in EDGE_NAMES if any(e.value == name for e in analysis.touched)],
        "truncated": analysis.boundary.truncated,
        "directions": directions,
        "proportions": proportions,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amodalkit",
        description="Single-pass amodal completion with layered RGBA output.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("complete", help="run the full pipeline and write an RGBA PNG")
    p.add_argument("image", help="input image path")
    p.add_argument("query", help="text query naming the occluded object")
    p.add_argument("--out", required=True, help="output RGBA PNG path")
    p.add_argument(
        "--dump-intermediates",
        action="store_true",
        help="write masks, masked input, prompt, attention, and completed RGB next to --out",
    )
    _add_common_flags(p)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("eval", help="run the benchmark over a JSONL manifest")
    p.add_argument("manifest", help="manifest .jsonl with {image, query, visible_mask?, category?}")
    p.add_argument("--out-dir", required=True, help="directory for report.json / report.csv")
    p.add_argument("--allow-failures", action="store_true", help="exit 0 even when cases fail")
    _add_common_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "inspect-mask", help="run occlusion + boundary analysis only, write the masks"
    )
    p.add_argument("image", help="input image path")
    p.add_argument("query", help="text query naming the occluded object")
    p.add_argument("--out-dir", required=True, help="directory for visible/inpaint mask PNGs")
    _add_common_flags(p)
    p.set_defaults(func=cmd_inspect_mask)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineStageError as exc:
        print(f"pipeline failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

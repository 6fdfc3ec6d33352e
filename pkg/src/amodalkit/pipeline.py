"""Single-pass completion orchestrator.

All spatial and semantic reasoning happens up front (occlusion analysis,
segmentation, boundary estimation, description); synthesis is exactly one
inpainting call on the composed region, followed by alpha extraction. There
is no iterative re-inpainting by design.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import agents
from .agents import (
    AgentParseError,
    BoundaryFinding,
    DescriptionFinding,
    OcclusionFinding,
    TaskQuery,
)
from .alpha import AttentionBundle, compose_rgba, extract_alpha
from .backends import InpaintParams, latent_grid
from .config import Backends, PipelineConfig
from .imaging import extract_visible, place_on_canvas
from .masks import (
    BinaryMask,
    CanvasPlacement,
    Edge,
    ExpansionSpec,
    Rect,
    StructuringElement,
    bbox,
    compose_inpaint_mask,
    compute_canvas,
    default_dilation_radius,
    edges_touched,
    place_mask,
)


class PipelineStageError(Exception):
    """A pipeline stage failed; carries the stage identity and the run trace."""

    def __init__(self, stage: str, message: str, trace: Optional[list] = None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.trace = tuple(trace or ())


@dataclass(frozen=True)
class PipelineResult:
    """Everything a run produced, intermediates included."""

    query_text: str
    occlusion: OcclusionFinding
    boundary: BoundaryFinding
    prompt: DescriptionFinding
    placement: CanvasPlacement
    visible_mask: BinaryMask
    visible_mask_canvas: BinaryMask
    occluder_masks: tuple[BinaryMask, ...]
    inpaint_mask: BinaryMask
    masked_input: np.ndarray
    completed: np.ndarray
    attention: Optional[AttentionBundle]
    alpha: BinaryMask
    rgba: np.ndarray
    degenerate: bool
    trace: tuple[dict, ...]

    def __post_init__(self):
        canvas = (self.placement.new_height, self.placement.new_width)
        for name in ("visible_mask_canvas", "inpaint_mask", "alpha"):
            if getattr(self, name).data.shape != canvas:
                raise ValueError(f"{name} does not share canvas dims {canvas}")
        for name in ("masked_input", "completed"):
            if getattr(self, name).shape[:2] != canvas:
                raise ValueError(f"{name} does not share canvas dims {canvas}")
        if self.rgba.shape != (*canvas, 4):
            raise ValueError("rgba shape mismatch")


@contextmanager
def _stage(trace: list, name: str, **extra):
    record = {"stage": name, **extra}
    start = time.perf_counter()
    try:
        yield record
    except PipelineStageError as exc:
        record["seconds"] = time.perf_counter() - start
        record["error"] = str(exc)
        trace.append(record)
        raise
    except Exception as exc:
        record["seconds"] = time.perf_counter() - start
        record["error"] = str(exc)
        trace.append(record)
        raise PipelineStageError(name, str(exc), trace) from exc
    record["seconds"] = time.perf_counter() - start
    trace.append(record)


def _chat_structured(
    backends: Backends,
    messages: list[dict],
    parse: Callable[[str], object],
    cfg: PipelineConfig,
    stage: str,
    record: dict,
):
    """Chat with schema-violation retries: each retry appends the bad reply and
    the parse error to the conversation before asking again."""
    convo = list(messages)
    transcripts = []
    last_error: Optional[AgentParseError] = None
    for attempt in range(cfg.max_retries + 1):
        text = backends.reasoning.chat(convo, temperature=cfg.temperature, seed=cfg.seed)
        transcripts.append(text)
        try:
            result = parse(text)
        except AgentParseError as exc:
            last_error = exc
            convo = convo + [
                {"role": "assistant", "content": text},
                {
                    "role": "user",
                    "content": f"Your previous reply was rejected: {exc}. "
                    "Reply again with only the JSON object in the required schema.",
                },
            ]
            continue
        record["transcripts"] = tuple(transcripts)
        record["attempts"] = attempt + 1
        return result
    record["transcripts"] = tuple(transcripts)
    raise PipelineStageError(
        stage, f"agent reply unparseable after {cfg.max_retries + 1} attempts: {last_error}"
    )


def run_single_agent(
    q: TaskQuery, cfg: PipelineConfig, backends: Backends, trace: Optional[list] = None
) -> tuple[OcclusionFinding, BoundaryFinding, DescriptionFinding]:
    """Combined-prompt baseline: all three findings from one reply."""
    trace = trace if trace is not None else []
    with _stage(trace, "single-agent") as record:
        messages = agents.build_single_agent_prompt(q)
        occ, boundary, desc, warnings = _chat_structured(
            backends,
            messages,
            lambda text: agents.parse_single_agent_response(text, cfg.description_max_words),
            cfg,
            "single-agent",
            record,
        )
        if warnings:
            record["warnings"] = tuple(warnings)
    return occ, boundary, desc


@dataclass(frozen=True)
class SpatialAnalysis:
    occlusion: OcclusionFinding
    visible_mask: BinaryMask
    occluder_masks: tuple[BinaryMask, ...]
    visible_bbox: Rect
    touched: frozenset[Edge]
    boundary: BoundaryFinding
    proportions_known: bool  # False for the bbox-only strategy (directions only)


def _run_occlusion(
    q: TaskQuery, cfg: PipelineConfig, backends: Backends, trace: list
) -> OcclusionFinding:
    with _stage(trace, "occlusion-agent") as record:
        return _chat_structured(
            backends,
            agents.build_occlusion_prompt(q),
            agents.parse_occlusion_response,
            cfg,
            "occlusion-agent",
            record,
        )


def _run_segmentation(
    q: TaskQuery,
    cfg: PipelineConfig,
    backends: Backends,
    occ: OcclusionFinding,
    visible_mask: Optional[BinaryMask],
    trace: list,
) -> tuple[BinaryMask, tuple[BinaryMask, ...], Rect, set[Edge]]:
    h, w = q.image.shape[:2]
    with _stage(trace, "segmentation") as record:
        if visible_mask is None:
            visible_mask, confidence = backends.segmentation.segment(q.image, occ.target_label)
            record["target_confidence"] = confidence
        if visible_mask.data.shape != (h, w):
            raise ValueError("visible mask dims do not match image")
        if visible_mask.is_empty():
            raise ValueError(f"empty visible mask for target {occ.target_label!r}")
        occluder_masks = tuple(
            backends.segmentation.segment(q.image, label)[0] for label in occ.occluder_labels
        )
        box = bbox(visible_mask)
        touched = edges_touched(box, w, h, cfg.edge_tolerance)
    return visible_mask, occluder_masks, box, touched


def _run_boundary(
    q: TaskQuery,
    cfg: PipelineConfig,
    backends: Backends,
    touched: set[Edge],
    box: Rect,
    trace: list,
) -> tuple[BoundaryFinding, bool]:
    strategy = cfg.boundary_strategy
    if strategy == "bbox-only":
        # geometric prior alone: it can say which edges, never how far
        expansion = ExpansionSpec()
        finding = BoundaryFinding(bool(touched), expansion, rationale="bbox edge contact only")
        trace.append({"stage": "boundary-agent", "seconds": 0.0, "strategy": strategy})
        return finding, False
    with _stage(trace, "boundary-agent", strategy=strategy) as record:
        if strategy == "agent-only":
            messages = agents.build_boundary_prompt(q, None, None)
        else:
            messages = agents.build_boundary_prompt(q, touched, box)

        def parse(text: str) -> BoundaryFinding:
            finding, warnings = agents.parse_boundary_response_with_warnings(text)
            if warnings:
                record.setdefault("warnings", []).extend(warnings)
            return finding

        finding = _chat_structured(backends, messages, parse, cfg, "boundary-agent", record)
    return finding, True


def _run_description(
    q: TaskQuery, cfg: PipelineConfig, backends: Backends, trace: list
) -> DescriptionFinding:
    with _stage(trace, "description-agent") as record:
        messages = agents.build_description_prompt(q)
        return _chat_structured(
            backends,
            messages,
            lambda text: agents.parse_description_response(text, cfg.description_max_words),
            cfg,
            "description-agent",
            record,
        )


def analyze_spatial(
    q: TaskQuery,
    cfg: PipelineConfig,
    backends: Backends,
    visible_mask: Optional[BinaryMask] = None,
    trace: Optional[list] = None,
) -> SpatialAnalysis:
    """Occlusion identification, segmentation, and boundary analysis (no synthesis)."""
    trace = trace if trace is not None else []
    occ = _run_occlusion(q, cfg, backends, trace)
    visible_mask, occluder_masks, box, touched = _run_segmentation(
        q, cfg, backends, occ, visible_mask, trace
    )
    boundary, proportions_known = _run_boundary(q, cfg, backends, touched, box, trace)
    return SpatialAnalysis(
        occ, visible_mask, occluder_masks, box, frozenset(touched), boundary, proportions_known
    )


def run_pipeline(
    q: TaskQuery,
    cfg: PipelineConfig,
    backends: Backends,
    visible_mask: Optional[BinaryMask] = None,
) -> PipelineResult:
    """One complete single-pass run; every intermediate is retained in the result.

    A precomputed visible mask (benchmark manifests supply one) replaces the
    target segmentation call but changes nothing else.
    """
    trace: list[dict] = []
    h, w = q.image.shape[:2]

    if cfg.single_agent:
        occ, boundary, desc = run_single_agent(q, cfg, backends, trace)
        visible_mask, occluder_masks, _, _ = _run_segmentation(
            q, cfg, backends, occ, visible_mask, trace
        )
    else:
        occ = _run_occlusion(q, cfg, backends, trace)
        visible_mask, occluder_masks, box, touched = _run_segmentation(
            q, cfg, backends, occ, visible_mask, trace
        )

        # boundary (needs the bbox prior) and description are independent
        if cfg.parallel_agents and cfg.boundary_strategy != "bbox-only":
            boundary_trace: list[dict] = []
            description_trace: list[dict] = []
            with ThreadPoolExecutor(max_workers=2) as pool:
                boundary_future = pool.submit(
                    _run_boundary, q, cfg, backends, touched, box, boundary_trace
                )
                description_future = pool.submit(
                    _run_description, q, cfg, backends, description_trace
                )
                boundary_exc = boundary_future.exception()
                description_exc = description_future.exception()
            trace.extend(boundary_trace)
            trace.extend(description_trace)
            if boundary_exc is not None:
                raise boundary_exc
            if description_exc is not None:
                raise description_exc
            boundary, _ = boundary_future.result()
            desc = description_future.result()
        else:
            boundary, _ = _run_boundary(q, cfg, backends, touched, box, trace)
            desc = _run_description(q, cfg, backends, trace)

    with _stage(trace, "canvas"):
        placement = compute_canvas(w, h, boundary.expansion)
        radius = cfg.dilation_radius
        if radius is None:
            radius = default_dilation_radius(w, h)
        inpaint_mask = compose_inpaint_mask(
            occluder_masks,
            visible_mask,
            placement,
            StructuringElement(radius),
            protect_visible=cfg.protect_visible,
        )

    with _stage(trace, "input-prep"):
        vis_only = extract_visible(q.image, visible_mask, cfg.background)
        masked_input = place_on_canvas(vis_only, placement, cfg.background)
        visible_canvas = place_mask(visible_mask, placement)

    degenerate = inpaint_mask.is_empty()
    attention: Optional[AttentionBundle] = None
    if degenerate:
        # nothing to synthesize: pass the prepared input through untouched
        trace.append({"stage": "inpainting", "seconds": 0.0, "skipped": True})
        completed = masked_input
    else:
        with _stage(trace, "inpainting") as record:
            params = InpaintParams(
                steps=cfg.steps,
                seed=cfg.seed,
                want_attention=True,
                attn_last_n=cfg.alpha.attn_last_n,
            )
            completed, attention = backends.inpainting.inpaint(
                masked_input, inpaint_mask, desc.prompt_text, params
            )
            record["steps"] = params.steps

    with _stage(trace, "alpha"):
        if degenerate:
            alpha = BinaryMask(visible_canvas.data.copy())
        else:
            bundle = attention
            if bundle is None:
                lw, lh = latent_grid(placement.new_width, placement.new_height)
                bundle = AttentionBundle.zeros(lw, lh)
            alpha = extract_alpha(completed, bundle, visible_canvas, cfg.effective_alpha())
        rgba = compose_rgba(completed, alpha)

    return PipelineResult(
        query_text=q.query_text,
        occlusion=occ,
        boundary=boundary,
        prompt=desc,
        placement=placement,
        visible_mask=visible_mask,
        visible_mask_canvas=visible_canvas,
        occluder_masks=occluder_masks,
        inpaint_mask=inpaint_mask,
        masked_input=masked_input,
        completed=completed,
        attention=attention,
        alpha=alpha,
        rgba=rgba,
        degenerate=degenerate,
        trace=tuple(trace),
    )

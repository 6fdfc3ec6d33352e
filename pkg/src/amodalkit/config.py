"""Pipeline configuration: dataclasses, JSON file loading, and backend wiring."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

from .alpha import AlphaConfig
from .backends import (
    HttpInpaintingClient,
    HttpMetricsClient,
    HttpReasoningClient,
    HttpSegmentationClient,
    InpaintingBackend,
    MetricBackend,
    MockInpainting,
    MockMetrics,
    MockReasoning,
    MockSegmentation,
    ReasoningBackend,
    SegmentationBackend,
)
from .masks import mask_from_png

BOUNDARY_STRATEGIES = ("hybrid", "agent-only", "bbox-only")


@dataclass
class BackendConfig:
    mode: str = "mock"  # mock | http
    metrics_mode: str = "none"  # none | mock | http
    reasoning_endpoint: str = ""
    segmentation_endpoint: str = ""
    inpainting_endpoint: str = ""
    metrics_endpoint: str = ""
    model: str = "gpt-4o"
    auth_env: str = "AMODAL_API_TOKEN"
    timeout_s: float = 60.0
    max_retries: int = 3
    backoff_s: float = 0.5
    max_in_flight: int = 4
    # mock-mode settings
    reasoning_fixtures: str = ""
    reasoning_fallback: Optional[str] = None
    strict_fixtures: bool = True
    segmentation_fixture_masks: dict = field(default_factory=dict)  # label -> mask PNG path
    chroma_colors: dict = field(default_factory=dict)  # label -> [r, g, b]
    chroma_distance: float = 32.0

    def __post_init__(self):
        if self.mode not in ("mock", "http"):
            raise ValueError(f"backend mode must be mock or http, got {self.mode!r}")
        if self.metrics_mode not in ("none", "mock", "http"):
            raise ValueError(f"metrics_mode must be none/mock/http, got {self.metrics_mode!r}")
        if self.mode == "http":
            for name in ("reasoning_endpoint", "segmentation_endpoint", "inpainting_endpoint"):
                if not getattr(self, name):
                    raise ValueError(f"http backend mode requires {name}")
        if self.metrics_mode == "http" and not self.metrics_endpoint:
            raise ValueError("metrics_mode=http requires metrics_endpoint")


@dataclass
class PipelineConfig:
    dilation_radius: Optional[int] = None  # None: proportional default
    protect_visible: bool = True
    edge_tolerance: int = 2
    background: tuple[int, int, int] = (255, 255, 255)
    single_agent: bool = False
    boundary_strategy: str = "hybrid"
    max_retries: int = 3
    description_max_words: int = 120
    temperature: float = 0.0
    seed: int = 0
    steps: int = 28
    parallel_agents: bool = True
    eval_parallelism: int = 4
    alpha: AlphaConfig = field(default_factory=AlphaConfig)
    backends: BackendConfig = field(default_factory=BackendConfig)

    def __post_init__(self):
        if self.boundary_strategy not in BOUNDARY_STRATEGIES:
            raise ValueError(f"boundary_strategy must be one of {BOUNDARY_STRATEGIES}")
        if self.dilation_radius is not None and self.dilation_radius < 0:
            raise ValueError("dilation_radius must be >= 0")
        if self.max_retries < 0 or self.steps < 1 or self.eval_parallelism < 1:
            raise ValueError("bad retry/step/parallelism settings")
        if self.edge_tolerance < 0 or self.description_max_words < 1:
            raise ValueError("bad tolerance/word-budget settings")
        self.background = tuple(int(c) for c in self.background)
        if len(self.background) != 3 or any(c < 0 or c > 255 for c in self.background):
            raise ValueError(f"bad background color {self.background}")

    def effective_alpha(self) -> AlphaConfig:
        """Alpha settings with the run seed threaded through for GrabCut determinism."""
        return dataclasses.replace(self.alpha, seed=self.seed)


def _from_dict(cls, data: dict, context: str):
    if not isinstance(data, dict):
        raise ValueError(f"{context}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"{context}: unknown keys {sorted(unknown)}")
    return data


def config_from_dict(data: dict) -> PipelineConfig:
    data = dict(_from_dict(PipelineConfig, data, "config"))
    if "alpha" in data:
        data["alpha"] = AlphaConfig(**_from_dict(AlphaConfig, data["alpha"], "config.alpha"))
    if "backends" in data:
        data["backends"] = BackendConfig(
            **_from_dict(BackendConfig, data["backends"], "config.backends")
        )
    if "background" in data:
        data["background"] = tuple(data["background"])
    return PipelineConfig(**data)


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


@dataclass
class Backends:
    reasoning: ReasoningBackend
    segmentation: SegmentationBackend
    inpainting: InpaintingBackend
    metrics: Optional[MetricBackend] = None


def build_backends(cfg: BackendConfig) -> Backends:
    if cfg.mode == "mock":
        if cfg.reasoning_fixtures:
            reasoning = MockReasoning.from_file(
                cfg.reasoning_fixtures, strict=cfg.strict_fixtures, fallback=cfg.reasoning_fallback
            )
        else:
            reasoning = MockReasoning({}, strict=cfg.strict_fixtures, fallback=cfg.reasoning_fallback)
        if cfg.segmentation_fixture_masks:
            masks = {label: mask_from_png(p) for label, p in cfg.segmentation_fixture_masks.items()}
            segmentation = MockSegmentation(fixture_masks=masks)
        else:
            colors = {label: tuple(c) for label, c in cfg.chroma_colors.items()}
            segmentation = MockSegmentation(chroma_colors=colors, chroma_distance=cfg.chroma_distance)
        inpainting = MockInpainting()
    else:
        common = dict(
            auth_env=cfg.auth_env,
            timeout_s=cfg.timeout_s,
            max_retries=cfg.max_retries,
            backoff_s=cfg.backoff_s,
            max_in_flight=cfg.max_in_flight,
        )
        reasoning = HttpReasoningClient(cfg.reasoning_endpoint, model=cfg.model, **common)
        segmentation = HttpSegmentationClient(cfg.segmentation_endpoint, **common)
        inpainting = HttpInpaintingClient(cfg.inpainting_endpoint, **common)

    metrics: Optional[MetricBackend] = None
    if cfg.metrics_mode == "mock":
        metrics = MockMetrics()
    elif cfg.metrics_mode == "http":
        metrics = HttpMetricsClient(
            cfg.metrics_endpoint,
            auth_env=cfg.auth_env,
            timeout_s=cfg.timeout_s,
            max_retries=cfg.max_retries,
            backoff_s=cfg.backoff_s,
            max_in_flight=cfg.max_in_flight,
        )
    return Backends(reasoning, segmentation, inpainting, metrics)

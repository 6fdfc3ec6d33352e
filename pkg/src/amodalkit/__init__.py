"""amodalkit: single-pass amodal completion pipeline with layered RGBA output."""

from .agents import (
    BoundaryFinding,
    DescriptionFinding,
    OcclusionFinding,
    TaskQuery,
)
from .alpha import AlphaConfig, AttentionBundle
from .config import Backends, BackendConfig, PipelineConfig, build_backends, load_config
from .masks import (
    BinaryMask,
    CanvasPlacement,
    Edge,
    ExpansionSpec,
    Rect,
    StructuringElement,
)
from .pipeline import PipelineResult, PipelineStageError, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "AlphaConfig",
    "AttentionBundle",
    "BackendConfig",
    "Backends",
    "BinaryMask",
    "BoundaryFinding",
    "CanvasPlacement",
    "DescriptionFinding",
    "Edge",
    "ExpansionSpec",
    "OcclusionFinding",
    "PipelineConfig",
    "PipelineResult",
    "PipelineStageError",
    "Rect",
    "StructuringElement",
    "TaskQuery",
    "build_backends",
    "load_config",
    "run_pipeline",
    "__version__",
]

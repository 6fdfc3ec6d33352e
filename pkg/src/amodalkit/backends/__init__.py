"""Pluggable model backends: deterministic mocks and HTTP service clients."""

from .base import (
    AuthError,
    BackendError,
    InpaintingBackend,
    InpaintParams,
    MetricBackend,
    ProtocolError,
    ReasoningBackend,
    SegmentationBackend,
    TransportError,
    latent_grid,
    load_schema,
    validate_payload,
)
from .http import (
    HttpInpaintingClient,
    HttpMetricsClient,
    HttpReasoningClient,
    HttpSegmentationClient,
    decode_inpaint_response,
    decode_metrics_response,
    decode_segment_response,
)
from .mock import MockInpainting, MockMetrics, MockReasoning, MockSegmentation, message_digest

__all__ = [
    "AuthError",
    "BackendError",
    "InpaintingBackend",
    "InpaintParams",
    "MetricBackend",
    "ProtocolError",
    "ReasoningBackend",
    "SegmentationBackend",
    "TransportError",
    "latent_grid",
    "load_schema",
    "validate_payload",
    "HttpInpaintingClient",
    "HttpMetricsClient",
    "HttpReasoningClient",
    "HttpSegmentationClient",
    "decode_inpaint_response",
    "decode_metrics_response",
    "decode_segment_response",
    "MockInpainting",
    "MockMetrics",
    "MockReasoning",
    "MockSegmentation",
    "message_digest",
]

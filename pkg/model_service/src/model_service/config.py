"""Service configuration."""
from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class ServiceConfig:
    """Which models to host and how to extract attention from the generator.

    ``engine`` selects the backend family: ``stub`` runs deterministic
    in-process substitutes (no weights needed, used for protocol conformance),
    anything else is treated as a real-model identifier set that must be
    loadable at startup.
    """

    engine: str = "stub"
    inpaint_model: str = ""
    segmentation_model: str = ""
    metrics_models: dict = field(default_factory=dict)
    device: str = "cpu"
    # attention extraction
    attn_layers: str = "all"  # which multi-stream blocks contribute maps
    self_refined: bool = True
    max_self_cells: int = 4096  # skip the self-propagated variant beyond this latent size
    # request handling
    max_queue: int = 8  # waiting requests beyond the one running; overflow -> 429
    auth_env: str = "MODEL_SERVICE_TOKEN"

    def __post_init__(self):
        if self.max_queue < 0:
            raise ValueError("max_queue must be >= 0")
        if self.engine != "stub" and not self.inpaint_model:
            raise ValueError(f"engine {self.engine!r} requires model identifiers")


def load_service_config(path) -> ServiceConfig:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return ServiceConfig(**data)

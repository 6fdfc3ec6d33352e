"""model-service: HTTP adapter hosting inpainting/segmentation/metric backends."""

from .app import create_app
from .config import ServiceConfig, load_service_config
from .conformance import conformance_fixture_dump

__version__ = "0.1.0"

__all__ = ["create_app", "ServiceConfig", "load_service_config", "conformance_fixture_dump"]

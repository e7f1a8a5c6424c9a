"""Perception sidecar: model-backed HTTP service with a deterministic mock mode."""

from .app import create_app
from .config import SidecarConfig

__version__ = "0.1.0"

__all__ = ["SidecarConfig", "create_app"]

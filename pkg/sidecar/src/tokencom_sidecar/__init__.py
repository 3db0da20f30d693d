"""Model sidecar service for the token communication simulator."""

from .service import ModelRuntime, SidecarSettings, create_app

__version__ = "0.1.0"

__all__ = ["ModelRuntime", "SidecarSettings", "create_app"]

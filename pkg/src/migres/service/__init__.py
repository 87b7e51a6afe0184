"""HTTP service wrapping the engine, plus the scripted stub model server."""

from .app import create_app
from .stubapp import create_stub_app

__all__ = ["create_app", "create_stub_app"]

"""Stateless HTTP service exposing the release pipeline."""
from .routes import app, create_app

__all__ = ["app", "create_app"]

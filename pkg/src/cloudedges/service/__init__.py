"""Interactive annotation service: label points in the browser, retrain a
small classifier on the labeled rows, and stream predictions back."""

from .app import create_app
from .store import (ConflictError, NotFoundError, PointLimitError, Session,
                    SessionOptions, SessionStore)

__all__ = [
    "ConflictError",
    "NotFoundError",
    "PointLimitError",
    "Session",
    "SessionOptions",
    "SessionStore",
    "create_app",
]

"""Adjudication review service: append-only session store and HTTP API."""

from .store import ReviewError, SessionStore, VersionConflict  # noqa: F401

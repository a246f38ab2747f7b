"""Base exception shared by every llm-triage error type."""

from __future__ import annotations


class TriageError(Exception):
    """Root of the llm-triage exception hierarchy."""

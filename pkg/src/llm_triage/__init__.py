"""Forensic triage of local LLM runner artifacts."""

__version__ = "0.1.0"

# Tests for llm-triage

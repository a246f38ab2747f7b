"""Per-runner artifact parsers (GGUF, Ollama, LM Studio, llama.cpp, SQLite)."""

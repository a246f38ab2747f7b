"""Synthetic evidence: subject filesystems, GGUF files and raw images with known contents."""

from llm_triage.synth.gguf import GgufParams, synthesize_gguf
from llm_triage.synth.image import plant_image, random_image
from llm_triage.synth.tree import SynthesisManifest, synthesize_tree, tree_digest

__all__ = [
    "GgufParams",
    "SynthesisManifest",
    "plant_image",
    "random_image",
    "synthesize_gguf",
    "synthesize_tree",
    "tree_digest",
]

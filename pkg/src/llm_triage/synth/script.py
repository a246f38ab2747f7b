"""The fixed user-interaction script planted into every synthetic corpus.

Ten prompts: benign questions, a code request, and one carrying a unique
keyword that later searches and carving should turn up.
"""

from __future__ import annotations

KEYWORD = "FORENSIC_KEYWORD_12345"

PROMPTS: tuple[str, ...] = (
    "How to make cake?",
    "Write a Python script to list files in a directory",
    f"Remember this code word: {KEYWORD}",
    "Summarize the plot of Hamlet in three sentences",
    "What is the capital of Australia?",
    "Explain the difference between TCP and UDP",
    "Translate 'good morning' into French, Spanish and German",
    "Write a haiku about autumn rain",
    "List five benefits of regular exercise",
    "What is 17 multiplied by 23?",
)

RESPONSES: tuple[str, ...] = (
    "Mix flour, sugar, eggs and butter, then bake at 180C for about 30 minutes.",
    "import os\n\nfor name in sorted(os.listdir('.')):\n    print(name)\n",
    f"Understood. The code word is {KEYWORD}.",
    "Prince Hamlet learns his uncle murdered his father. He feigns madness while "
    "plotting revenge. Nearly everyone dies in the final duel.",
    "The capital of Australia is Canberra.",
    "TCP is connection-oriented and reliable; UDP is connectionless and faster.",
    "Bonjour, Buenos dias, Guten Morgen.",
    "Cold rain on the eaves\nred leaves drown in the gutter\nthe kettle whistles",
    "Better sleep, stronger heart, improved mood, more energy, healthier weight.",
    "17 multiplied by 23 is 391.",
)

# Typed at an interactive llama-cli prompt: reaches RAM, never shell history.
INTERACTIVE_PROMPT = "Tell me a secret about the moon landing FORENSIC_MEMORY_67890"

# Stands in for a hub token; must never appear in a report in clear text.
SECRET_MARKER = "lmst-secret-token-5f2b9c"

# Sampling parameters on every planted batch invocation.
BATCH_PARAMS: dict[str, str] = {
    "temp": "0.7",
    "top_p": "0.9",
    "ctx_size": "4096",
    "seed": "42",
    "n_predict": "128",
}
BATCH_FLAGS = "--temp 0.7 --top-p 0.9 -c 4096 -s 42 -n 128"

# Prompts replayed as llama.cpp batch runs.
BATCH_PROMPTS: tuple[str, ...] = PROMPTS[:3]


def _quote(text: str) -> str:
    return "'" + text.replace("'", "'\\''") + "'"


def batch_line(binary: str, model: str, prompt: str, *, powershell: bool = False) -> str:
    """A llama.cpp command line as the user would have typed it."""
    quoted = '"' + prompt.replace('"', '`"') + '"' if powershell else _quote(prompt)
    return f"{binary} -m {model} -p {quoted} {BATCH_FLAGS}"


def interactive_line(binary: str, model: str) -> str:
    return f"{binary} -m {model} -i -c 4096"

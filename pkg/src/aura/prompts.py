"""Versioned prompt templates shipped as package data.

Templates use ``<placeholder>`` tokens filled by ``render``; str.format is
avoided so JSON braces can appear literally in template bodies. The judge
template is a fixed external contract: its bytes must not be edited.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

PROMPT_VERSION = 1

_NAMES = ("preprocessor", "rewriter", "decision", "attributor", "judge")


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    if name not in _NAMES:
        raise KeyError(f"unknown prompt template: {name!r}")
    return (resources.files("aura") / "prompts" / f"{name}.txt").read_text(encoding="utf-8")


def render(template: str, **values: str) -> str:
    out = template
    for key, value in values.items():
        out = out.replace(f"<{key}>", value)
    return out

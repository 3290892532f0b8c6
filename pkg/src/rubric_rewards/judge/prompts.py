"""Prompt template loading and rendering.

Templates are plain text files with ``{placeholder}`` substitution and no
logic, so they can be audited byte-for-byte. Rendering is strict: a
missing value or a leftover placeholder is a programming error.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping

TEMPLATE_IDS = (
    "rewrite",
    "dedup",
    "temporal",
    "nugget_creator",
    "nugget_merger",
    "nugget_scorer",
    "match_ternary",
    "match_binary",
)

_PLACEHOLDER_RE = re.compile(r"\{(\w+)\}")


@lru_cache(maxsize=None)
def load_template(template_id: str) -> str:
    if template_id not in TEMPLATE_IDS:
        raise KeyError(f"unknown prompt template: {template_id!r}")
    path = resources.files(__package__) / "templates" / f"{template_id}.txt"
    return path.read_text(encoding="utf-8")


def render(template_id: str, values: Mapping[str, str]) -> str:
    text = load_template(template_id)

    def substitute(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in values:
            raise KeyError(f"template {template_id!r} is missing a value for {{{name}}}")
        return str(values[name])

    return _PLACEHOLDER_RE.sub(substitute, text)


def numbered_list(items: Iterable[str]) -> str:
    """The 1-based numbered rendering used for nugget lists in prompts."""
    return "\n".join(f"{i}. {item}" for i, item in enumerate(items, start=1))


def bulleted_list(items: Iterable[str]) -> str:
    return "\n".join(f"- {item}" for item in items)

"""Scripted chat backend for tests and mock pipeline runs.

Rules are evaluated in order against the rendered prompt; the first
match wins. A rule either replays a literal response or synthesizes a
label answer by reading the nugget list and the format instruction out
of the prompt, which keeps scripted verdicts stable under re-batching.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from ..core import SupportLabel
from ..errors import MockRuleMiss
from .formats import FORMATS, FormatId, serialize_labels

_NUMBERED_ITEM_RE = re.compile(r"^\s*\d+\.\s*(.*)$")
_MATCH_NUGGETS_RE = re.compile(r"Nuggets \(\d+\): (.*?)\nPlease provide", re.DOTALL)
_LISTED_NUGGETS_RE = re.compile(r"List of nuggets:\s*\n(.*)\Z", re.DOTALL)


def _numbered_items(block: str) -> list[str]:
    items = []
    for line in block.splitlines():
        match = _NUMBERED_ITEM_RE.match(line)
        if match is None:
            if items:
                break
            continue
        items.append(match.group(1).strip())
    return items


def extract_prompt_nuggets(prompt: str) -> list[str]:
    """Pull the numbered nugget list back out of a rendered prompt."""
    match = _MATCH_NUGGETS_RE.search(prompt)
    if match is None:
        match = _LISTED_NUGGETS_RE.search(prompt)
    if match is None:
        raise MockRuleMiss("prompt carries no recognizable nugget list")
    return _numbered_items(match.group(1))


def detect_prompt_format(prompt: str) -> FormatId:
    for format_id, label_format in FORMATS.items():
        if label_format.instruction_text in prompt:
            return format_id
    raise MockRuleMiss("prompt carries no known format instruction")


@dataclass
class MockRule:
    """One scripted behavior: a prompt pattern plus a response recipe."""

    match: str
    respond: Optional[str] = None
    label_rules: tuple[tuple[str, str], ...] = ()
    label_default: Optional[str] = None
    weight_rules: tuple[tuple[str, str], ...] = ()
    weight_default: Optional[str] = None
    _compiled: re.Pattern = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._compiled = re.compile(self.match)

    @classmethod
    def from_dict(cls, data: dict) -> "MockRule":
        labels = data.get("respond_labels") or {}
        weights = data.get("respond_weights") or {}
        return cls(
            match=data["match"],
            respond=data.get("respond"),
            label_rules=tuple((s, l) for s, l in labels.get("rules", ())),
            label_default=labels.get("default"),
            weight_rules=tuple((s, w) for s, w in weights.get("rules", ())),
            weight_default=weights.get("default"),
        )

    def applies(self, prompt: str) -> bool:
        return self._compiled.search(prompt) is not None

    def response_for(self, prompt: str) -> str:
        if self.respond is not None:
            return self.respond
        if self.label_default is not None or self.label_rules:
            nuggets = extract_prompt_nuggets(prompt)
            fmt = detect_prompt_format(prompt)
            labels = [
                SupportLabel.from_token(self._lookup(n, self.label_rules, self.label_default))
                for n in nuggets
            ]
            return "<reasoning>scripted judgment</reasoning>\n" + serialize_labels(labels, fmt)
        if self.weight_default is not None or self.weight_rules:
            nuggets = extract_prompt_nuggets(prompt)
            weights = [self._lookup(n, self.weight_rules, self.weight_default) for n in nuggets]
            return "<reasoning>scripted weighting</reasoning>\n" + "\n".join(weights)
        raise MockRuleMiss(f"rule {self.match!r} has no response recipe")

    @staticmethod
    def _lookup(nugget: str, rules: tuple[tuple[str, str], ...], default: Optional[str]) -> str:
        for substring, value in rules:
            if substring in nugget:
                return value
        if default is None:
            raise MockRuleMiss(f"no label rule covers nugget {nugget!r}")
        return default


class MockChatBackend:
    """Rule-driven stand-in for a remote judge; raises on unmatched prompts."""

    def __init__(self, rules: Sequence[MockRule | dict]):
        self.rules = [r if isinstance(r, MockRule) else MockRule.from_dict(r) for r in rules]
        self.calls: list[str] = []

    @classmethod
    def from_file(cls, path: Path | str) -> "MockChatBackend":
        with Path(path).open(encoding="utf-8") as handle:
            return cls(json.load(handle))

    @property
    def n_calls(self) -> int:
        return len(self.calls)

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        for rule in self.rules:
            if rule.applies(prompt):
                return rule.response_for(prompt)
        raise MockRuleMiss(f"no mock rule matches prompt starting: {prompt[:160]!r}")

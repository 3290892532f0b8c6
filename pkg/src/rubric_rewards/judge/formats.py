"""Structured label output formats and their strict parsers.

Ten interchangeable answer formats are supported for label lists; every
format has exactly one serializer and one parser, and
``parse_labels(serialize_labels(s, f), f, len(s))`` round-trips exactly.
Token matching is case-insensitive and whitespace-tolerant but the
vocabulary is closed: anything that does not normalize to a known label
is rejected rather than guessed.
"""

from __future__ import annotations

import ast
import enum
import json
import re
import xml.etree.ElementTree as ElementTree
from dataclasses import dataclass
from typing import Callable, Sequence

import yaml

from ..core import SupportLabel
from ..errors import (
    BinaryViolation,
    CountMismatch,
    FormatViolation,
    UnknownToken,
)


class LabelMode(enum.Enum):
    TERNARY = "ternary"
    BINARY = "binary"


class FormatId(enum.Enum):
    JSON = "json"
    CSV = "csv"
    PYTHON_LIST = "python_list"
    YAML = "yaml"
    MARKDOWN = "markdown"
    XML = "xml"
    TSV = "tsv"
    NUMBERED = "numbered"
    COMMA_SEPARATED = "comma_separated"
    PIPE_SEPARATED = "pipe_separated"


@dataclass(frozen=True)
class LabelFormat:
    id: FormatId
    instruction_text: str


_REASONING_RE = re.compile(r"<reasoning>(.*?)</reasoning>", re.DOTALL)


def split_reasoning(raw: str) -> tuple[str, str]:
    """Split a raw response into (reasoning, payload).

    The reasoning is the content of the first well-formed
    ``<reasoning>...</reasoning>`` span; the payload is everything after
    its closing tag, trimmed. Without a closing tag the whole input is
    the payload and the reasoning is empty.
    """
    match = _REASONING_RE.search(raw)
    if match is None:
        return "", raw.strip()
    return match.group(1), raw[match.end():].strip()


_TOKEN_ALIASES = {
    "support": SupportLabel.SUPPORT,
    "partial_support": SupportLabel.PARTIAL_SUPPORT,
    "partially_support": SupportLabel.PARTIAL_SUPPORT,
    "not_support": SupportLabel.NOT_SUPPORT,
}


def _normalize_token(token: str) -> str:
    return re.sub(r"[\s\-]+", "_", token.strip().lower())


def _token_to_label(token: str) -> SupportLabel:
    normalized = _normalize_token(token)
    label = _TOKEN_ALIASES.get(normalized)
    if label is None:
        raise UnknownToken(f"not a support label: {token!r}")
    return label


def _split_tokens(payload: str, separator: str) -> list[str]:
    if not payload.strip():
        return []
    return payload.strip().split(separator)


def _parse_json(payload: str) -> list[str]:
    try:
        data = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise FormatViolation(f"invalid JSON payload: {exc}") from exc
    if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
        raise FormatViolation("JSON payload must be an array of strings")
    return data


def _parse_python_list(payload: str) -> list[str]:
    try:
        data = ast.literal_eval(payload.strip())
    except (ValueError, SyntaxError) as exc:
        raise FormatViolation(f"invalid Python list payload: {exc}") from exc
    if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
        raise FormatViolation("Python payload must be a list of strings")
    return data


def _parse_yaml(payload: str) -> list[str]:
    try:
        data = yaml.safe_load(payload)
    except yaml.YAMLError as exc:
        raise FormatViolation(f"invalid YAML payload: {exc}") from exc
    if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
        raise FormatViolation("YAML payload must be a list of strings")
    return data


def _parse_markdown(payload: str) -> list[str]:
    tokens = []
    for line in payload.strip().splitlines():
        line = line.strip()
        if not line:
            continue
        if not line.startswith(("* ", "- ")):
            raise FormatViolation(f"not a Markdown list item: {line!r}")
        tokens.append(line[2:].strip())
    return tokens

def _parse_xml(payload: str) -> list[str]:
    try:
        root = ElementTree.fromstring(payload.strip())
    except ElementTree.ParseError as exc:
        raise FormatViolation(f"invalid XML payload: {exc}") from exc
    if root.tag != "labels":
        raise FormatViolation(f"XML root must be <labels>, got <{root.tag}>")
    tokens = []
    for child in root:
        if child.tag != "label":
            raise FormatViolation(f"unexpected XML element <{child.tag}>")
        tokens.append(child.text or "")
    return tokens


_NUMBERED_RE = re.compile(r"^(\d+)\.\s*(.*)$")


def _parse_numbered(payload: str) -> list[str]:
    tokens = []
    for position, line in enumerate(
        (l for l in payload.strip().splitlines() if l.strip()), start=1
    ):
        match = _NUMBERED_RE.match(line.strip())
        if match is None:
            raise FormatViolation(f"not a numbered list item: {line!r}")
        if int(match.group(1)) != position:
            raise FormatViolation(
                f"numbered list out of order: expected {position}, got {match.group(1)}"
            )
        tokens.append(match.group(2))
    return tokens


_PARSERS: dict[FormatId, Callable[[str], list[str]]] = {
    FormatId.JSON: _parse_json,
    FormatId.CSV: lambda p: _split_tokens(p, ","),
    FormatId.PYTHON_LIST: _parse_python_list,
    FormatId.YAML: _parse_yaml,
    FormatId.MARKDOWN: _parse_markdown,
    FormatId.XML: _parse_xml,
    FormatId.TSV: lambda p: _split_tokens(p, "\t"),
    FormatId.NUMBERED: _parse_numbered,
    FormatId.COMMA_SEPARATED: lambda p: _split_tokens(p, ","),
    FormatId.PIPE_SEPARATED: lambda p: _split_tokens(p, "|"),
}

_SERIALIZERS: dict[FormatId, Callable[[Sequence[SupportLabel]], str]] = {
    FormatId.JSON: lambda ls: json.dumps([l.token for l in ls]),
    FormatId.CSV: lambda ls: ",".join(l.token for l in ls),
    FormatId.PYTHON_LIST: lambda ls: "[" + ", ".join(f"'{l.token}'" for l in ls) + "]",
    FormatId.YAML: lambda ls: "\n".join(f"- {l.token}" for l in ls),
    FormatId.MARKDOWN: lambda ls: "\n".join(f"* {l.token}" for l in ls),
    FormatId.XML: lambda ls: (
        "<labels>\n" + "\n".join(f"<label>{l.token}</label>" for l in ls) + "\n</labels>"
    ),
    FormatId.TSV: lambda ls: "\t".join(l.token for l in ls),
    FormatId.NUMBERED: lambda ls: "\n".join(f"{i}. {l.token}" for i, l in enumerate(ls, 1)),
    FormatId.COMMA_SEPARATED: lambda ls: ", ".join(l.token for l in ls),
    FormatId.PIPE_SEPARATED: lambda ls: "|".join(l.token for l in ls),
}

FORMATS: dict[FormatId, LabelFormat] = {
    FormatId.JSON: LabelFormat(
        FormatId.JSON,
        "Respond with a JSON array containing exactly one label for each nugget.",
    ),
    FormatId.CSV: LabelFormat(
        FormatId.CSV,
        "Respond with comma-separated values, one label for each nugget.",
    ),
    FormatId.PYTHON_LIST: LabelFormat(
        FormatId.PYTHON_LIST,
        "Respond with a Python list containing exactly one label for each nugget.",
    ),
    FormatId.YAML: LabelFormat(
        FormatId.YAML,
        "Respond with a YAML list, one label for each nugget.",
    ),
    FormatId.MARKDOWN: LabelFormat(
        FormatId.MARKDOWN,
        "Respond with a Markdown unordered list, one label for each nugget.",
    ),
    FormatId.XML: LabelFormat(
        FormatId.XML,
        "Respond with XML format, one label for each nugget.",
    ),
    FormatId.TSV: LabelFormat(
        FormatId.TSV,
        "Respond with tab-separated values, one label for each nugget.",
    ),
    FormatId.NUMBERED: LabelFormat(
        FormatId.NUMBERED,
        "Respond with a numbered list, one label for each nugget.",
    ),
    FormatId.COMMA_SEPARATED: LabelFormat(
        FormatId.COMMA_SEPARATED,
        "Respond with comma-separated values with spaces, one label for each nugget.",
    ),
    FormatId.PIPE_SEPARATED: LabelFormat(
        FormatId.PIPE_SEPARATED,
        "Respond with pipe-separated values, one label for each nugget.",
    ),
}


def resolve_format(fmt: "LabelFormat | FormatId | str") -> LabelFormat:
    if isinstance(fmt, LabelFormat):
        return fmt
    if isinstance(fmt, str):
        fmt = FormatId(fmt)
    return FORMATS[fmt]


def serialize_labels(labels: Sequence[SupportLabel], fmt: "LabelFormat | FormatId | str") -> str:
    if not labels:
        raise ValueError("cannot serialize an empty label list")
    return _SERIALIZERS[resolve_format(fmt).id](labels)


def parse_labels(
    payload: str,
    fmt: "LabelFormat | FormatId | str",
    n: int,
    mode: LabelMode = LabelMode.TERNARY,
) -> list[SupportLabel]:
    """Parse exactly ``n`` labels from a payload in the given format.

    Raises FormatViolation for a malformed container, UnknownToken for an
    out-of-vocabulary token, CountMismatch for the wrong number of labels,
    and BinaryViolation when partial_support appears in binary mode.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    tokens = _PARSERS[resolve_format(fmt).id](payload)
    labels = [_token_to_label(t) for t in tokens]
    if len(labels) != n:
        raise CountMismatch(f"expected {n} labels, found {len(labels)}")
    if mode is LabelMode.BINARY and SupportLabel.PARTIAL_SUPPORT in labels:
        raise BinaryViolation("partial_support is not allowed in binary mode")
    return labels

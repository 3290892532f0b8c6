"""LLM judge client: prompt templates, transport, formats, and parsing."""

from .client import (
    ChatBackend,
    HttpChatBackend,
    Judge,
    JudgeConfig,
    JudgeExchange,
    ResponseCache,
)
from .formats import (
    FORMATS,
    FormatId,
    LabelFormat,
    LabelMode,
    parse_labels,
    resolve_format,
    serialize_labels,
    split_reasoning,
)
from .mock import MockChatBackend, MockRule
from .prompts import TEMPLATE_IDS, load_template, numbered_list, render

__all__ = [
    "ChatBackend",
    "FORMATS",
    "FormatId",
    "HttpChatBackend",
    "Judge",
    "JudgeConfig",
    "JudgeExchange",
    "LabelFormat",
    "LabelMode",
    "MockChatBackend",
    "MockRule",
    "ResponseCache",
    "TEMPLATE_IDS",
    "load_template",
    "numbered_list",
    "parse_labels",
    "render",
    "resolve_format",
    "serialize_labels",
    "split_reasoning",
]

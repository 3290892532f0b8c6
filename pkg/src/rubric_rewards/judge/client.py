"""LLM judge client: transport, caching, and every judged operation.

The ``Judge`` renders a prompt template, sends it through a chat backend,
splits the reasoning span off the response, and parses the payload under
the strict per-operation contract. Parse failures trigger a bounded
corrective re-ask; transport failures retry with backoff. Responses are
cached by (model, temperature, salt, prompt) so re-runs are deterministic
and resumable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence, TypeVar

from ..core import Block, Passage, Question, Rubric, SupportLabel, WeightClass
from ..errors import (
    CountMismatch,
    CoverageViolation,
    JudgeUnavailable,
    ParseError,
    UnknownToken,
    UnparseableLine,
    UnparseablePayload,
    VerificationFailed,
)
from . import prompts
from .formats import LabelFormat, LabelMode, parse_labels, resolve_format, split_reasoning

logger = logging.getLogger(__name__)

T = TypeVar("T")

NONE_SENTINEL = "[None]"
NO_MERGE_SENTINEL = "[NO NEED]"


@dataclass(frozen=True)
class JudgeConfig:
    endpoint_url: str = ""
    model_name: str = "mock"
    api_key_env_var_name: str = ""
    max_retries: int = 2
    request_timeout: float = 60.0
    temperature: float = 0.0
    cache_dir: Optional[Path] = None
    in_flight_limit: int = 4

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")


@dataclass(frozen=True)
class JudgeExchange:
    """One prompted call: the rendered prompt and the parsed response halves."""

    template_id: str
    rendered_prompt: str
    raw_response: str
    reasoning: str
    payload: str
    attempt: int = 0

    def to_dict(self) -> dict:
        return {
            "template_id": self.template_id,
            "rendered_prompt": self.rendered_prompt,
            "raw_response": self.raw_response,
            "reasoning": self.reasoning,
            "payload": self.payload,
            "attempt": self.attempt,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "JudgeExchange":
        return cls(
            template_id=data["template_id"],
            rendered_prompt=data["rendered_prompt"],
            raw_response=data["raw_response"],
            reasoning=data["reasoning"],
            payload=data["payload"],
            attempt=int(data.get("attempt", 0)),
        )


class ChatBackend(Protocol):
    def complete(self, prompt: str) -> str:
        """Return the raw completion text for a single-user-message prompt."""
        ...


class HttpChatBackend:
    """Chat-completion client for the de-facto open inference wire shape."""

    def __init__(self, config: JudgeConfig):
        import os

        import requests

        self._requests = requests
        self._config = config
        self._api_key = os.environ.get(config.api_key_env_var_name, "") if config.api_key_env_var_name else ""

    def complete(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        body = {
            "model": self._config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self._config.temperature,
        }
        response = self._requests.post(
            self._config.endpoint_url,
            json=body,
            headers=headers,
            timeout=self._config.request_timeout,
        )
        response.raise_for_status()
        data = response.json()
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise JudgeUnavailable(f"malformed chat completion response: {exc}") from exc


class ResponseCache:
    """Append-only JSONL cache of judge exchanges, keyed by prompt hash."""

    def __init__(self, directory: Path):
        self._path = Path(directory) / "exchanges.jsonl"
        self._lock = threading.Lock()
        self._entries: dict[str, JudgeExchange] = {}
        if self._path.exists():
            with self._path.open(encoding="utf-8") as handle:
                for line in handle:
                    if not line.strip():
                        continue
                    record = json.loads(line)
                    key = record.pop("key")
                    self._entries[key] = JudgeExchange.from_dict(record)

    def get(self, key: str) -> Optional[JudgeExchange]:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, exchange: JudgeExchange) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = exchange
            self._path.parent.mkdir(parents=True, exist_ok=True)
            record = {"key": key, **exchange.to_dict()}
            with self._path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(record, sort_keys=True) + "\n")


def _cache_key(model: str, temperature: float, salt: str, prompt: str) -> str:
    material = "\x1f".join((model, repr(temperature), salt, prompt))
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class Judge:
    """All LLM-judged operations, bound to one backend and one config."""

    def __init__(self, backend: ChatBackend, config: Optional[JudgeConfig] = None):
        self.backend = backend
        self.config = config or JudgeConfig()
        self._cache = ResponseCache(self.config.cache_dir) if self.config.cache_dir else None
        self._in_flight = threading.Semaphore(max(1, self.config.in_flight_limit))

    # -- transport ---------------------------------------------------------

    def exchange(self, template_id: str, prompt: str, cache_salt: str = "") -> JudgeExchange:
        key = _cache_key(self.config.model_name, self.config.temperature, cache_salt, prompt)
        if self._cache is not None:
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        last_error: Optional[Exception] = None
        for attempt in range(self.config.max_retries + 1):
            try:
                with self._in_flight:
                    raw = self.backend.complete(prompt)
            except Exception as exc:  # noqa: BLE001 - transport errors vary by backend
                last_error = exc
                if attempt < self.config.max_retries:
                    time.sleep(min(0.5 * 2**attempt, 8.0))
                continue
            reasoning, payload = split_reasoning(raw)
            result = JudgeExchange(
                template_id=template_id,
                rendered_prompt=prompt,
                raw_response=raw,
                reasoning=reasoning,
                payload=payload,
                attempt=attempt,
            )
            if self._cache is not None:
                self._cache.put(key, result)
            return result
        raise JudgeUnavailable(
            f"judge backend failed after {self.config.max_retries + 1} attempts: {last_error}"
        ) from last_error

    def _ask_parsed(
        self,
        template_id: str,
        prompt: str,
        parse: Callable[[JudgeExchange], T],
        cache_salt: str = "",
    ) -> tuple[T, JudgeExchange]:
        """Ask, parse, and on parse failure re-ask with a corrective note."""
        base_prompt = prompt
        last_error: Optional[ParseError] = None
        last_exchange: Optional[JudgeExchange] = None
        for attempt in range(self.config.max_retries + 1):
            salt = cache_salt if attempt == 0 else f"{cache_salt}#retry{attempt}"
            exchange = self.exchange(template_id, prompt, cache_salt=salt)
            try:
                return parse(exchange), exchange
            except ParseError as exc:
                last_error = exc
                last_exchange = exchange
                prompt = (
                    base_prompt
                    + f"\n\nYour previous response violated this constraint: {exc}."
                    + " Follow the output format exactly."
                )
        assert last_error is not None
        logger.error(
            "judge kept violating the %s contract; last payload: %r",
            template_id,
            (last_exchange.payload if last_exchange else "")[:500],
        )
        raise last_error

    # -- payload shapes ----------------------------------------------------

    @staticmethod
    def _parse_lines(payload: str, max_items: int, what: str) -> list[str]:
        if payload.strip() == NONE_SENTINEL:
            return []
        lines = [line.strip() for line in payload.splitlines() if line.strip()]
        if len(lines) > max_items:
            logger.warning("judge produced %d %s; keeping the first %d", len(lines), what, max_items)
            lines = lines[:max_items]
        return lines

    @staticmethod
    def _parse_bool(payload: str) -> bool:
        token = payload.strip().rstrip(".").lower()
        if token == "true":
            return True
        if token == "false":
            return False
        raise UnparseablePayload(f"expected True or False, got {payload!r}")

    # -- operations --------------------------------------------------------

    def rewrite_queries(
        self, question: Question, query: str, passage: Passage, max_new: int = 3
    ) -> list[str]:
        """Ask for up to ``max_new`` rewritten queries grounded in a passage."""
        if max_new < 1:
            raise ValueError("max_new must be >= 1")
        prompt = prompts.render(
            "rewrite",
            {
                "max_num_new_queries": str(max_new),
                "question": question.text,
                "query": query,
                "passage": passage.text,
            },
        )
        exchange = self.exchange("rewrite", prompt)
        return self._parse_lines(exchange.payload, max_new, "rewritten queries")

    def is_duplicate_query(self, candidate: str, existing: Sequence[str]) -> bool:
        """True when the judge deems the candidate similar to an existing query."""
        if not existing:
            raise ValueError("existing queries must be non-empty")
        prompt = prompts.render(
            "dedup",
            {
                "rewritten_query": candidate,
                "existing_queries": prompts.bulleted_list(existing),
            },
        )

        def parse(exchange: JudgeExchange) -> bool:
            return self._parse_bool(exchange.payload)

        verdict, _ = self._ask_parsed("dedup", prompt, parse)
        return verdict

    def check_temporal(self, query: str, passage: Passage) -> bool:
        """True when the passage satisfies the query's time constraint."""
        prompt = prompts.render("temporal", {"query": query, "passage": passage.text})

        def parse(exchange: JudgeExchange) -> bool:
            return self._parse_bool(exchange.payload)

        verdict, _ = self._ask_parsed("temporal", prompt, parse)
        return verdict

    def extract_nuggets(
        self, question: Question, passage: Passage, max_nuggets: int = 10
    ) -> list[str]:
        if max_nuggets < 1:
            raise ValueError("max_nuggets must be >= 1")
        prompt = prompts.render(
            "nugget_creator",
            {
                "creator_max_nuggets": str(max_nuggets),
                "question": question.text,
                "passage": passage.text,
            },
        )
        exchange = self.exchange("nugget_creator", prompt)
        return self._parse_lines(exchange.payload, max_nuggets, "nuggets")

    def merge_nuggets(
        self, question: Question, nuggets: Sequence[str]
    ) -> list[tuple[str, list[int]]]:
        """Group similar nuggets; returns (merged text, 1-based member indices).

        The output partitions the input index set: every index appears in
        exactly one group.
        """
        if not nuggets:
            raise ValueError("nuggets must be non-empty")
        prompt = prompts.render(
            "nugget_merger",
            {
                "question": question.text,
                "nuggets": "\n" + prompts.numbered_list(nuggets),
            },
        )
        n = len(nuggets)

        def parse(exchange: JudgeExchange) -> list[tuple[str, list[int]]]:
            return _parse_merge_payload(exchange.payload, n, nuggets)

        groups, _ = self._ask_parsed("nugget_merger", prompt, parse)
        return groups

    def assign_weights(self, question: Question, nuggets: Sequence[str]) -> list[WeightClass]:
        if not nuggets:
            raise ValueError("nuggets must be non-empty")
        prompt = prompts.render(
            "nugget_scorer",
            {
                "num_nuggets": str(len(nuggets)),
                "question": question.text,
                "nuggets": "\n" + prompts.numbered_list(nuggets),
            },
        )

        def parse(exchange: JudgeExchange) -> list[WeightClass]:
            lines = [line.strip() for line in exchange.payload.splitlines() if line.strip()]
            if len(lines) != len(nuggets):
                raise CountMismatch(f"expected {len(nuggets)} weight labels, found {len(lines)}")
            classes = []
            for line in lines:
                token = line.strip().lower()
                if token not in ("vital", "okay"):
                    raise UnknownToken(f"not a weight label: {line!r}")
                classes.append(WeightClass(token))
            return classes

        classes, _ = self._ask_parsed("nugget_scorer", prompt, parse)
        return classes

    def verify_rubrics(
        self,
        question: Question,
        block: Block,
        rubrics: Sequence[Rubric],
        fmt: "LabelFormat | str",
        mode: LabelMode = LabelMode.TERNARY,
    ) -> list[SupportLabel]:
        labels, _ = self.verify_rubrics_exchange(question, block, rubrics, fmt, mode)
        return labels

    def verify_rubrics_exchange(
        self,
        question: Question,
        block: Block,
        rubrics: Sequence[Rubric],
        fmt: "LabelFormat | str",
        mode: LabelMode = LabelMode.TERNARY,
        cache_salt: str = "",
    ) -> tuple[list[SupportLabel], JudgeExchange]:
        """Judge a batch of at most 10 rubrics against one answer block."""
        if not 1 <= len(rubrics) <= 10:
            raise ValueError("verify_rubrics judges between 1 and 10 rubrics per call")
        label_format = resolve_format(fmt)
        template_id = "match_ternary" if mode is LabelMode.TERNARY else "match_binary"
        prompt = prompts.render(
            template_id,
            {
                "num_nuggets": str(len(rubrics)),
                "number_nuggets": str(len(rubrics)),
                "format_instruction": label_format.instruction_text,
                "query": question.text,
                "passage": block.text,
                "nugget_list": prompts.numbered_list(r.text for r in rubrics),
            },
        )

        def parse(exchange: JudgeExchange) -> list[SupportLabel]:
            return parse_labels(exchange.payload, label_format, len(rubrics), mode)

        try:
            return self._ask_parsed(template_id, prompt, parse, cache_salt=cache_salt)
        except ParseError as exc:
            raise VerificationFailed(
                f"judge failed to produce {len(rubrics)} valid labels in "
                f"{label_format.id.value} format: {exc}"
            ) from exc


_MERGE_LINE_RE = re.compile(r"^(.*?)\s*\[\s*(\d+(?:\s*,\s*\d+)*)\s*\]\s*$")


def _parse_merge_payload(
    payload: str, n: int, nuggets: Sequence[str]
) -> list[tuple[str, list[int]]]:
    if payload.strip() == NO_MERGE_SENTINEL:
        return [(text, [i]) for i, text in enumerate(nuggets, start=1)]
    groups: list[tuple[str, list[int]]] = []
    seen: set[int] = set()
    for line in payload.splitlines():
        line = line.strip()
        if not line:
            continue
        match = _MERGE_LINE_RE.match(line)
        if match is None or not match.group(1).strip():
            raise UnparseableLine(f"not a 'nugget_text [ids]' line: {line!r}")
        indices = [int(i) for i in match.group(2).split(",")]
        for index in indices:
            if not 1 <= index <= n:
                raise CoverageViolation(f"nugget index {index} out of range 1..{n}")
            if index in seen:
                raise CoverageViolation(f"nugget index {index} assigned to two groups")
            seen.add(index)
        groups.append((match.group(1).strip(), indices))
    missing = set(range(1, n + 1)) - seen
    if missing:
        raise CoverageViolation(f"nugget indices not covered by any group: {sorted(missing)}")
    return groups

"""Domain types shared by every pipeline stage.

Everything here is an immutable value object with a stable JSONL
representation; enums serialize as lowercase snake_case strings.
"""

from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Optional, Sequence, Union


class SupportLabel(enum.IntEnum):
    """Ternary verdict for one rubric against one answer block.

    The integer values encode the total order
    not_support < partial_support < support, so ``max`` is the
    max-pooling operator.
    """

    NOT_SUPPORT = 0
    PARTIAL_SUPPORT = 1
    SUPPORT = 2

    @property
    def token(self) -> str:
        return self.name.lower()

    @classmethod
    def from_token(cls, token: str) -> "SupportLabel":
        try:
            return cls[token.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown support label: {token!r}") from None


_LABEL_POINTS = {
    SupportLabel.NOT_SUPPORT: 0.0,
    SupportLabel.PARTIAL_SUPPORT: 0.5,
    SupportLabel.SUPPORT: 1.0,
}


def label_value(label: SupportLabel) -> float:
    """Points contributed by a verdict: support 1, partial 0.5, not 0."""
    return _LABEL_POINTS[SupportLabel(label)]


def label_max(a: SupportLabel, b: SupportLabel) -> SupportLabel:
    """Max-pooling of two verdicts under not < partial < support."""
    return max(SupportLabel(a), SupportLabel(b))


class WeightClass(enum.Enum):
    VITAL = "vital"
    OKAY = "okay"

    @property
    def weight(self) -> float:
        return 1.0 if self is WeightClass.VITAL else 0.5


class Workload(enum.Enum):
    SHORT_FORM = "short_form"
    LONG_FORM = "long_form"


_WS_RE = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Whitespace-collapsed, lowercased form used for identity hashing."""
    return _WS_RE.sub(" ", text).strip().lower()


def _short_hash(payload: str) -> str:
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def passage_id(text: str) -> str:
    """Deterministic passage identity: hash of the normalized text.

    Two retrieval paths reaching the same content agree on the id, which
    makes "previously unseen passage" checks order-independent.
    """
    return _short_hash(normalize_text(text))


def rubric_id(question_id: str, text: str) -> str:
    return _short_hash(question_id + "\x1f" + normalize_text(text))


@dataclass(frozen=True)
class CorpusSource:
    doc_id: str
    segment_index: int

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "corpus", "doc_id": self.doc_id, "segment_index": self.segment_index}


@dataclass(frozen=True)
class WebSource:
    url: str

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "web", "url": self.url}


PassageSource = Union[CorpusSource, WebSource]


def source_from_dict(data: Mapping[str, Any]) -> PassageSource:
    kind = data.get("kind")
    if kind == "corpus":
        return CorpusSource(doc_id=data["doc_id"], segment_index=int(data["segment_index"]))
    if kind == "web":
        return WebSource(url=data["url"])
    raise ValueError(f"unknown passage source kind: {kind!r}")


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    workload: Workload = Workload.LONG_FORM

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("question text must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "text": self.text, "workload": self.workload.value}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Question":
        return cls(id=data["id"], text=data["text"], workload=Workload(data.get("workload", "long_form")))


@dataclass(frozen=True)
class Passage:
    """A retrieval unit: a 5-10 sentence segment of a document or web page."""

    id: str
    text: str
    source: PassageSource
    score: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("passage text must be non-empty")

    @classmethod
    def make(cls, text: str, source: PassageSource, score: Optional[float] = None) -> "Passage":
        return cls(id=passage_id(text), text=text, source=source, score=score)

    def with_score(self, score: float) -> "Passage":
        return replace(self, score=score)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"id": self.id, "text": self.text, "source": self.source.to_dict()}
        if self.score is not None:
            out["score"] = self.score
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Passage":
        return cls(
            id=data["id"],
            text=data["text"],
            source=source_from_dict(data["source"]),
            score=data.get("score"),
        )


@dataclass(frozen=True)
class Rubric:
    """One weighted atomic fact statement a good answer should contain."""

    id: str
    text: str
    weight_class: WeightClass
    weight: float
    provenance: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("rubric text must be non-empty")
        if self.weight != self.weight_class.weight:
            raise ValueError(
                f"rubric weight {self.weight} inconsistent with class {self.weight_class.value}"
            )

    @classmethod
    def make(
        cls,
        question_id: str,
        text: str,
        weight_class: WeightClass,
        provenance: Iterable[str] = (),
    ) -> "Rubric":
        return cls(
            id=rubric_id(question_id, text),
            text=text,
            weight_class=weight_class,
            weight=weight_class.weight,
            provenance=tuple(provenance),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "weight_class": self.weight_class.value,
            "weight": self.weight,
            "provenance": list(self.provenance),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Rubric":
        return cls(
            id=data["id"],
            text=data["text"],
            weight_class=WeightClass(data["weight_class"]),
            weight=float(data["weight"]),
            provenance=tuple(data.get("provenance", ())),
        )


@dataclass(frozen=True)
class RubricSet:
    question_id: str
    rubrics: tuple[Rubric, ...] = ()

    def __post_init__(self) -> None:
        ids = [r.id for r in self.rubrics]
        if len(set(ids)) != len(ids):
            raise ValueError("rubric ids must be unique within a set")

    def __len__(self) -> int:
        return len(self.rubrics)

    @property
    def total_weight(self) -> float:
        return sum(r.weight for r in self.rubrics)

    def to_dict(self) -> dict[str, Any]:
        return {"question_id": self.question_id, "rubrics": [r.to_dict() for r in self.rubrics]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RubricSet":
        return cls(
            question_id=data["question_id"],
            rubrics=tuple(Rubric.from_dict(r) for r in data.get("rubrics", ())),
        )


@dataclass(frozen=True)
class Block:
    """A paragraph-scale segment of an answer; the unit the judge reads."""

    index: int
    text: str

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError("block index must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {"index": self.index, "text": self.text}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Block":
        return cls(index=int(data["index"]), text=data["text"])


@dataclass(frozen=True)
class Judgment:
    rubric_id: str
    block_index: int
    label: SupportLabel

    def to_dict(self) -> dict[str, Any]:
        return {
            "rubric_id": self.rubric_id,
            "block_index": self.block_index,
            "label": self.label.token,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Judgment":
        return cls(
            rubric_id=data["rubric_id"],
            block_index=int(data["block_index"]),
            label=SupportLabel.from_token(data["label"]),
        )


@dataclass(frozen=True)
class Answer:
    """A model-produced answer. Empty text is valid and scores zero."""

    question_id: str
    text: str
    generator: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"question_id": self.question_id, "text": self.text, "generator": self.generator}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Answer":
        return cls(
            question_id=data["question_id"],
            text=data.get("text", ""),
            generator=data.get("generator", ""),
        )


@dataclass(frozen=True)
class PerRubricScore:
    rubric_id: str
    label: SupportLabel
    contribution: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "rubric_id": self.rubric_id,
            "label": self.label.token,
            "contribution": self.contribution,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PerRubricScore":
        return cls(
            rubric_id=data["rubric_id"],
            label=SupportLabel.from_token(data["label"]),
            contribution=float(data["contribution"]),
        )


@dataclass(frozen=True)
class RewardScore:
    """Weighted-average rubric reward in [0, 1] plus its per-rubric breakdown."""

    value: float
    per_rubric: tuple[PerRubricScore, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"value": self.value, "per_rubric": [p.to_dict() for p in self.per_rubric]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RewardScore":
        return cls(
            value=float(data["value"]),
            per_rubric=tuple(PerRubricScore.from_dict(p) for p in data.get("per_rubric", ())),
        )


@dataclass(frozen=True)
class GoldRecord:
    """Teacher-labeled rubrics for one answer block; the training unit."""

    question_id: str
    block: Block
    rubric_ids: tuple[str, ...]
    gold_labels: tuple[SupportLabel, ...]
    reasoning: str = ""

    def __post_init__(self) -> None:
        if len(self.rubric_ids) != len(self.gold_labels):
            raise ValueError("rubric_ids and gold_labels must have equal length")
        if not 1 <= len(self.rubric_ids) <= 10:
            raise ValueError("a gold record carries between 1 and 10 rubrics")

    def to_dict(self) -> dict[str, Any]:
        return {
            "question_id": self.question_id,
            "block": self.block.to_dict(),
            "rubric_ids": list(self.rubric_ids),
            "gold_labels": [l.token for l in self.gold_labels],
            "reasoning": self.reasoning,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GoldRecord":
        return cls(
            question_id=data["question_id"],
            block=Block.from_dict(data["block"]),
            rubric_ids=tuple(data["rubric_ids"]),
            gold_labels=tuple(SupportLabel.from_token(l) for l in data["gold_labels"]),
            reasoning=data.get("reasoning", ""),
        )

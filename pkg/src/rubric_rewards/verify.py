"""Answer verification: block segmentation, batched judging, max-pooled
aggregation, the weighted rubric reward, and short-form EM/hybrid checks."""

from __future__ import annotations

import logging
import re
import string
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

from .core import (
    Answer,
    Block,
    Judgment,
    PerRubricScore,
    Question,
    RewardScore,
    RubricSet,
    SupportLabel,
    Workload,
    label_max,
    label_value,
)
from .errors import CoverageMismatch, IncompleteCoverage, VerificationFailed
from .judge import Judge, LabelFormat, LabelMode
from .retrieval import split_sentences
from .rubrics import short_form_rubric

logger = logging.getLogger(__name__)

_PARAGRAPH_SPLIT_RE = re.compile(r"\n\s*\n")


def _split_oversize(text: str, max_chars: int) -> list[str]:
    """Split a too-long block at sentence boundaries near the cap."""
    if len(text) <= max_chars:
        return [text]
    sentences = split_sentences(text)
    if len(sentences) <= 1:
        return [text]
    pieces: list[str] = []
    current = ""
    for sentence in sentences:
        candidate = f"{current} {sentence}".strip()
        if current and len(candidate) > max_chars:
            pieces.append(current)
            current = sentence
        else:
            current = candidate
    if current:
        pieces.append(current)
    return [piece for chunk in pieces for piece in ([chunk] if len(chunk) <= max_chars else [chunk])]


def segment_answer(
    answer: Answer,
    workload: Workload = Workload.LONG_FORM,
    min_block_chars: int = 200,
    max_block_chars: int = 4000,
) -> list[Block]:
    """Divide an answer into judgeable blocks.

    Long-form answers split on blank lines; consecutive short paragraphs
    coalesce until a block reaches ``min_block_chars``, and blocks over
    ``max_block_chars`` re-split at sentence boundaries. Short-form
    answers are a single block, and an empty answer is one empty block.
    """
    if workload is Workload.SHORT_FORM:
        return [Block(index=0, text=answer.text)]
    if not answer.text.strip():
        return [Block(index=0, text="")]
    paragraphs = [p.strip() for p in _PARAGRAPH_SPLIT_RE.split(answer.text) if p.strip()]
    coalesced: list[str] = []
    for paragraph in paragraphs:
        if coalesced and len(coalesced[-1]) < min_block_chars:
            coalesced[-1] = coalesced[-1] + "\n\n" + paragraph
        else:
            coalesced.append(paragraph)
    texts = [piece for block in coalesced for piece in _split_oversize(block, max_block_chars)]
    return [Block(index=i, text=t) for i, t in enumerate(texts)]


def _batched(rubrics: Sequence, cap: int) -> list[list]:
    return [list(rubrics[i : i + cap]) for i in range(0, len(rubrics), cap)]


def verify_answer(
    question: Question,
    answer: Answer,
    rubric_set: RubricSet,
    judge: Judge,
    fmt: "LabelFormat | str",
    mode: LabelMode = LabelMode.TERNARY,
    batch_cap: int = 10,
    min_block_chars: int = 200,
    max_block_chars: int = 4000,
    max_workers: int = 1,
) -> list[Judgment]:
    """Judge every rubric against every block, in batches of ``batch_cap``.

    Returns one judgment per (rubric, block) pair. Blocks with no visible
    content cannot support anything and are scored not_support without a
    judge call.
    """
    if not rubric_set.rubrics:
        raise ValueError("rubric_set must be non-empty")
    if not 1 <= batch_cap <= 10:
        raise ValueError("batch_cap must be within 1..10")
    blocks = segment_answer(answer, question.workload, min_block_chars, max_block_chars)
    work = [(block, batch) for block in blocks for batch in _batched(rubric_set.rubrics, batch_cap)]

    def judge_pair(item: tuple[Block, list]) -> list[Judgment]:
        block, batch = item
        if not block.text.strip():
            return [
                Judgment(r.id, block.index, SupportLabel.NOT_SUPPORT) for r in batch
            ]
        try:
            labels = judge.verify_rubrics(question, block, batch, fmt, mode)
        except VerificationFailed as exc:
            raise VerificationFailed(
                f"block {block.index}, rubrics {[r.id for r in batch]}: {exc}"
            ) from exc
        return [
            Judgment(rubric.id, block.index, label) for rubric, label in zip(batch, labels)
        ]

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(judge_pair, work))
    else:
        results = [judge_pair(item) for item in work]
    return [judgment for batch_result in results for judgment in batch_result]


def aggregate(
    judgments: Sequence[Judgment], rubric_set: RubricSet
) -> list[tuple[str, SupportLabel]]:
    """Max-pool each rubric's verdicts across all blocks.

    Every rubric must be judged in every block that appears in the
    judgment list; missing pairs raise IncompleteCoverage.
    """
    block_indices = sorted({j.block_index for j in judgments})
    by_pair: dict[tuple[str, int], SupportLabel] = {}
    for judgment in judgments:
        by_pair[(judgment.rubric_id, judgment.block_index)] = judgment.label
    pooled: list[tuple[str, SupportLabel]] = []
    for rubric in rubric_set.rubrics:
        best: Optional[SupportLabel] = None
        for block_index in block_indices:
            label = by_pair.get((rubric.id, block_index))
            if label is None:
                raise IncompleteCoverage(
                    f"rubric {rubric.id} has no judgment for block {block_index}"
                )
            best = label if best is None else label_max(best, label)
        if best is None:
            raise IncompleteCoverage(f"rubric {rubric.id} has no judgments at all")
        pooled.append((rubric.id, best))
    return pooled


def reward(
    rubric_set: RubricSet, aggregated: Sequence[tuple[str, SupportLabel]]
) -> RewardScore:
    """Weighted average of per-rubric verdict points, in [0, 1].

    An empty rubric set scores 0.0 (with a warning) instead of dividing
    by zero.
    """
    if not rubric_set.rubrics:
        logger.warning("reward over an empty rubric set for %s is 0.0", rubric_set.question_id)
        return RewardScore(value=0.0, per_rubric=())
    labels = dict(aggregated)
    if len(aggregated) != len(labels) or set(labels) != {r.id for r in rubric_set.rubrics}:
        raise CoverageMismatch("aggregated labels must cover each rubric exactly once")
    per_rubric = tuple(
        PerRubricScore(
            rubric_id=rubric.id,
            label=labels[rubric.id],
            contribution=rubric.weight * label_value(labels[rubric.id]),
        )
        for rubric in rubric_set.rubrics
    )
    total = sum(entry.contribution for entry in per_rubric)
    return RewardScore(value=total / rubric_set.total_weight, per_rubric=per_rubric)


def score_answer(
    question: Question,
    answer: Answer,
    rubric_set: RubricSet,
    judge: Judge,
    fmt: "LabelFormat | str",
    mode: LabelMode = LabelMode.TERNARY,
    batch_cap: int = 10,
    min_block_chars: int = 200,
    max_block_chars: int = 4000,
    max_workers: int = 1,
) -> tuple[list[Judgment], RewardScore]:
    """Convenience wrapper: verify, aggregate, and reward in one call."""
    if not rubric_set.rubrics:
        return [], reward(rubric_set, [])
    judgments = verify_answer(
        question,
        answer,
        rubric_set,
        judge,
        fmt,
        mode,
        batch_cap,
        min_block_chars,
        max_block_chars,
        max_workers,
    )
    return judgments, reward(rubric_set, aggregate(judgments, rubric_set))


# -- short-form verification ---------------------------------------------------

_ARTICLES = frozenset({"a", "an", "the"})


def normalize_short_answer(text: str) -> str:
    """QA-style normalization: lowercase, drop punctuation and articles,
    collapse whitespace."""
    text = text.lower()
    text = "".join(ch for ch in text if ch not in string.punctuation)
    tokens = [t for t in text.split() if t not in _ARTICLES]
    return " ".join(tokens)


def em_match(prediction: str, ground_truth: str) -> bool:
    """Strict match of normalized strings."""
    return normalize_short_answer(prediction) == normalize_short_answer(ground_truth)


def hybrid_verify(
    question: Question,
    prediction: str,
    ground_truth: str,
    judge: Judge,
    fmt: "LabelFormat | str",
) -> bool:
    """EM first; only EM-false pairs get a generative binary re-check.

    A true EM verdict is final, so the hybrid can only recover false
    negatives, never introduce them.
    """
    if not ground_truth.strip():
        raise EmptyGroundTruthError()
    if em_match(prediction, ground_truth):
        return True
    rubric_set = short_form_rubric(question.id, ground_truth)
    labels = judge.verify_rubrics(
        question,
        Block(index=0, text=prediction),
        rubric_set.rubrics,
        fmt,
        LabelMode.BINARY,
    )
    return labels[0] is SupportLabel.SUPPORT


def EmptyGroundTruthError():  # pragma: no cover - alias kept out of public API
    from .errors import EmptyGroundTruth

    return EmptyGroundTruth("hybrid verification needs a non-empty ground truth")

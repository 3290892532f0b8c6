"""Turn mined passages into a weighted rubric set.

Stages: per-passage nugget extraction (quality filtering happens inside
the extraction prompt), similarity merging in bounded batches with one
cross-batch consolidation pass, then vital/okay weighting.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

from .core import Passage, Question, Rubric, RubricSet, WeightClass
from .errors import EmptyGroundTruth, JudgeUnavailable, ParseError
from .judge import Judge

logger = logging.getLogger(__name__)


def extract_all(
    question: Question,
    passages: Sequence[Passage],
    judge: Judge,
    max_per_passage: int = 10,
    max_workers: int = 1,
) -> list[tuple[str, str]]:
    """Extract nuggets per passage, concatenated in passage order.

    Returns (nugget text, source passage id) pairs; a passage that fails
    parsing is skipped with a warning, and "[None]" answers contribute
    nothing.
    """
    if not passages:
        raise ValueError("passages must be non-empty")

    def extract(passage: Passage) -> list[str]:
        try:
            return judge.extract_nuggets(question, passage, max_per_passage)
        except ParseError as exc:
            logger.warning("skipping passage %s: %s", passage.id, exc)
            return []

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            per_passage = list(pool.map(extract, passages))
    else:
        per_passage = [extract(p) for p in passages]

    return [
        (nugget, passage.id)
        for passage, nuggets in zip(passages, per_passage)
        for nugget in nuggets
    ]


def _merge_batch(
    question: Question,
    judge: Judge,
    entries: Sequence[tuple[str, tuple[str, ...]]],
) -> list[tuple[str, tuple[str, ...]]]:
    """One judged merge pass over (text, provenance) entries."""
    groups = judge.merge_nuggets(question, [text for text, _ in entries])
    merged = []
    for text, members in groups:
        provenance: list[str] = []
        for member in members:
            for pid in entries[member - 1][1]:
                if pid not in provenance:
                    provenance.append(pid)
        merged.append((text, tuple(provenance)))
    return merged


def merge_all(
    question: Question,
    nuggets: Sequence[tuple[str, str]],
    judge: Judge,
    batch_size: int = 30,
) -> list[tuple[str, tuple[str, ...]]]:
    """Merge similar nuggets, first within batches, then across batches.

    A single consolidation pass over the batched results catches
    cross-batch duplicates; merged provenance is the union of member
    source passages, first occurrence first.
    """
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    if not nuggets:
        return []
    entries = [(text, (pid,)) for text, pid in nuggets]
    batches = [entries[i : i + batch_size] for i in range(0, len(entries), batch_size)]
    first_pass: list[tuple[str, tuple[str, ...]]] = []
    for batch in batches:
        first_pass.extend(_merge_batch(question, judge, batch))
    if len(batches) == 1 or len(first_pass) < 2:
        return first_pass
    return _merge_batch(question, judge, first_pass)


def build_rubric_set(
    question: Question,
    passages: Sequence[Passage],
    judge: Judge,
    max_per_passage: int = 10,
    batch_size: int = 30,
    max_workers: int = 1,
) -> RubricSet:
    """Extract, merge, and weight nuggets into the question's rubric set."""
    if not passages:
        return RubricSet(question_id=question.id)
    nuggets = extract_all(question, passages, judge, max_per_passage, max_workers)
    if not nuggets:
        logger.warning("question %s yielded no nuggets; empty rubric set", question.id)
        return RubricSet(question_id=question.id)
    merged = merge_all(question, nuggets, judge, batch_size)
    classes = judge.assign_weights(question, [text for text, _ in merged])
    rubrics = tuple(
        Rubric.make(question.id, text, weight_class, provenance)
        for (text, provenance), weight_class in zip(merged, classes)
    )
    return RubricSet(question_id=question.id, rubrics=rubrics)


def short_form_rubric(question_id: str, ground_truth: str) -> RubricSet:
    """A single vital rubric: the ground-truth answer itself."""
    if not ground_truth.strip():
        raise EmptyGroundTruth("short-form ground truth must be non-empty")
    rubric = Rubric.make(question_id, ground_truth, WeightClass.VITAL)
    return RubricSet(question_id=question_id, rubrics=(rubric,))

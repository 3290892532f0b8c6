"""Corpus segmentation, dense retrieval, threshold calibration, web fetch.

Retrieval is exact cosine over stored unit vectors: at the corpus sizes
this engine targets, an ANN index would only add moving parts.
Embeddings come either from a remote endpoint or from a deterministic
token-hashing stub that keeps tests and mock runs self-contained.
"""

from __future__ import annotations

import hashlib
import logging
import math
import re
import threading
import time
from dataclasses import dataclass
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

from .core import CorpusSource, Passage, WebSource, passage_id
from .errors import (
    EmbeddingServiceUnavailable,
    InsufficientLabels,
    ProviderUnavailable,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CorpusDocument:
    doc_id: str
    text: str

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "text": self.text}

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusDocument":
        return cls(doc_id=data["doc_id"], text=data["text"])


# -- sentence segmentation ---------------------------------------------------

# Terminal punctuation ends a sentence unless the preceding token is a known
# abbreviation or a single initial.
_ABBREVIATIONS = frozenset(
    {
        "mr", "mrs", "ms", "dr", "prof", "st", "vs", "etc", "e.g", "i.e",
        "fig", "no", "al", "inc", "ltd", "jr", "sr", "approx", "dept",
        "u.s", "u.k", "a.m", "p.m",
    }
)

_BOUNDARY_RE = re.compile(r"[.!?]+(?=\s|$)")
_LAST_TOKEN_RE = re.compile(r"([\w.]+)$")


def split_sentences(text: str) -> list[str]:
    """Split on terminal punctuation followed by whitespace or end of text."""
    sentences: list[str] = []
    start = 0
    for match in _BOUNDARY_RE.finditer(text):
        token_match = _LAST_TOKEN_RE.search(text, start, match.start())
        if token_match is not None:
            token = token_match.group(1).lower().rstrip(".")
            if token in _ABBREVIATIONS or (len(token) == 1 and token.isalpha()):
                continue
        sentence = text[start : match.end()].strip()
        if sentence:
            sentences.append(sentence)
        start = match.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def _window_sizes(n: int, min_sentences: int, max_sentences: int) -> list[int]:
    """Greedy max-size windows; a short trailing remainder borrows from the
    window before it so every emitted size stays within [min, max]."""
    if n == 0:
        return []
    if n < min_sentences:
        return [n]
    full, remainder = divmod(n, max_sentences)
    if remainder == 0:
        return [max_sentences] * full
    if remainder >= min_sentences:
        return [max_sentences] * full + [remainder]
    deficit = min_sentences - remainder
    if full >= 1 and max_sentences - deficit >= min_sentences:
        return [max_sentences] * (full - 1) + [max_sentences - deficit, min_sentences]
    # No in-range split exists for this (n, min, max); oversize the last window.
    sizes = [max_sentences] * full
    sizes[-1] += remainder
    return sizes


def segment_document(
    doc: CorpusDocument, min_sentences: int = 5, max_sentences: int = 10
) -> list[Passage]:
    """Cut a document into passages of min..max sentences, in order."""
    if not 1 <= min_sentences <= max_sentences:
        raise ValueError("need 1 <= min_sentences <= max_sentences")
    sentences = split_sentences(doc.text)
    passages = []
    cursor = 0
    for index, size in enumerate(_window_sizes(len(sentences), min_sentences, max_sentences)):
        text = " ".join(sentences[cursor : cursor + size])
        passages.append(Passage.make(text, CorpusSource(doc.doc_id, index)))
        cursor += size
    return passages


# -- embeddings --------------------------------------------------------------


class EmbeddingBackend(Protocol):
    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return one embedding row per input text."""
        ...


_TOKEN_RE = re.compile(r"\w+")

# Tiny stopword list so the hashing stub's cosine geometry is driven by
# content words rather than shared function words.
_HASH_STOPWORDS = frozenset(
    "a an and are as at be but by did do does for from had has have in is it its of on or "
    "that the to was were what when where which who why will with".split()
)


class HashingEmbeddingBackend:
    """Deterministic signed token-hashing embeddings (a test/mock stub).

    Identical texts always map to identical unit vectors, and texts with
    no shared content tokens are nearly orthogonal, which is all the
    pipeline needs from a stub.
    """

    def __init__(self, dim: int = 512, seed: int = 0):
        if dim < 8:
            raise ValueError("dim must be >= 8")
        self.dim = dim
        self.seed = seed

    def _token_slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(
            f"{self.seed}:{token}".encode("utf-8"), digest_size=8
        ).digest()
        value = int.from_bytes(digest, "big")
        return value % self.dim, 1.0 if (value >> 63) & 1 else -1.0

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for token in _TOKEN_RE.findall(text.lower()):
                if token in _HASH_STOPWORDS:
                    continue
                slot, sign = self._token_slot(token)
                out[row, slot] += sign
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


class RemoteEmbeddingBackend:
    """Client for a JSON embedding endpoint: {model, input} -> {data: [...]}."""

    def __init__(
        self,
        endpoint_url: str,
        model_name: str,
        api_key_env_var_name: str = "",
        request_timeout: float = 60.0,
        max_retries: int = 2,
    ):
        import os

        import requests

        self._requests = requests
        self.endpoint_url = endpoint_url
        self.model_name = model_name
        self.request_timeout = request_timeout
        self.max_retries = max_retries
        self._api_key = os.environ.get(api_key_env_var_name, "") if api_key_env_var_name else ""

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            try:
                response = self._requests.post(
                    self.endpoint_url,
                    json={"model": self.model_name, "input": list(texts)},
                    headers=headers,
                    timeout=self.request_timeout,
                )
                response.raise_for_status()
                data = response.json()["data"]
                return np.asarray([row["embedding"] for row in data], dtype=np.float64)
            except Exception as exc:  # noqa: BLE001
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(min(0.5 * 2**attempt, 8.0))
        raise EmbeddingServiceUnavailable(
            f"embedding endpoint failed after {self.max_retries + 1} attempts: {last_error}"
        ) from last_error


# -- index and search ---------------------------------------------------------


@dataclass(frozen=True)
class RetrievalHit:
    passage: Passage
    score: float


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return matrix / norms


class VectorIndex:
    """Exact-cosine index over unit-normalized passage embeddings."""

    def __init__(self, backend: EmbeddingBackend):
        self.backend = backend
        self._order: list[str] = []
        self._passages: dict[str, Passage] = {}
        self._vectors: dict[str, np.ndarray] = {}
        self._matrix: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self._order)

    def add(self, passages: Iterable[Passage]) -> None:
        """Index passages; re-adding an id replaces its entry in place."""
        batch = list(passages)
        if not batch:
            return
        vectors = _unit_rows(self.backend.embed([p.text for p in batch]))
        for passage, vector in zip(batch, vectors):
            if passage.id not in self._passages:
                self._order.append(passage.id)
            self._passages[passage.id] = passage
            self._vectors[passage.id] = vector
        self._matrix = None

    def passage(self, pid: str) -> Passage:
        return self._passages[pid]

    def vector(self, pid: str) -> Optional[np.ndarray]:
        return self._vectors.get(pid)

    def _stacked(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.vstack([self._vectors[pid] for pid in self._order])
        return self._matrix

    def search(self, query: str, k: int) -> list[RetrievalHit]:
        """Top-k passages by cosine similarity, score-descending."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self._order:
            return []
        query_vector = _unit_rows(self.backend.embed([query]))[0]
        scores = np.clip(self._stacked() @ query_vector, -1.0, 1.0)
        top = np.argsort(-scores, kind="stable")[:k]
        hits = []
        for position in top:
            pid = self._order[int(position)]
            score = float(scores[int(position)])
            hits.append(RetrievalHit(self._passages[pid].with_score(score), score))
        return hits


def index_passages(backend: EmbeddingBackend, passages: Iterable[Passage]) -> VectorIndex:
    index = VectorIndex(backend)
    index.add(passages)
    return index


# -- threshold calibration -----------------------------------------------------


@dataclass(frozen=True)
class QrelRecord:
    query_text: str
    passage_id: str
    relevant: bool

    def to_dict(self) -> dict:
        return {
            "query_text": self.query_text,
            "passage_id": self.passage_id,
            "relevant": self.relevant,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QrelRecord":
        return cls(
            query_text=data["query_text"],
            passage_id=data["passage_id"],
            relevant=bool(data["relevant"]),
        )


@dataclass(frozen=True)
class ScoreStats:
    count: int
    mean: float
    std: float
    min: float
    max: float

    @classmethod
    def from_scores(cls, scores: Sequence[float]) -> "ScoreStats":
        array = np.asarray(scores, dtype=np.float64)
        return cls(
            count=int(array.size),
            mean=float(array.mean()),
            std=float(array.std()),
            min=float(array.min()),
            max=float(array.max()),
        )

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "std": self.std,
            "min": self.min,
            "max": self.max,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScoreStats":
        return cls(
            count=int(data["count"]),
            mean=float(data["mean"]),
            std=float(data["std"]),
            min=float(data["min"]),
            max=float(data["max"]),
        )


@dataclass(frozen=True)
class ThresholdCalibration:
    """A relevance cutoff plus the score distributions that produced it."""

    threshold: float
    relevant_stats: ScoreStats
    irrelevant_stats: ScoreStats

    @property
    def stats(self) -> tuple[ScoreStats, ScoreStats]:
        return self.relevant_stats, self.irrelevant_stats

    @classmethod
    def fixed(cls, threshold: float) -> "ThresholdCalibration":
        degenerate = ScoreStats(count=0, mean=threshold, std=0.0, min=threshold, max=threshold)
        return cls(threshold=threshold, relevant_stats=degenerate, irrelevant_stats=degenerate)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "stats": {
                "relevant": self.relevant_stats.to_dict(),
                "irrelevant": self.irrelevant_stats.to_dict(),
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ThresholdCalibration":
        return cls(
            threshold=float(data["threshold"]),
            relevant_stats=ScoreStats.from_dict(data["stats"]["relevant"]),
            irrelevant_stats=ScoreStats.from_dict(data["stats"]["irrelevant"]),
        )


def balanced_accuracy(
    relevant: Sequence[float], irrelevant: Sequence[float], threshold: float
) -> float:
    """Mean of true-positive and true-negative rate for `score >= threshold`."""
    tpr = sum(1 for s in relevant if s >= threshold) / len(relevant)
    tnr = sum(1 for s in irrelevant if s < threshold) / len(irrelevant)
    return (tpr + tnr) / 2.0


def calibrate_threshold(qrels: Sequence[QrelRecord], index: VectorIndex) -> ThresholdCalibration:
    """Pick the score cutoff that best separates labeled relevant pairs.

    Sweeps every observed score and every midpoint of adjacent distinct
    scores, maximizing balanced accuracy; ties resolve to the lowest
    threshold to favor recall.
    """
    relevant_scores: list[float] = []
    irrelevant_scores: list[float] = []
    query_vectors: dict[str, np.ndarray] = {}
    for record in qrels:
        vector = index.vector(record.passage_id)
        if vector is None:
            logger.warning("qrel passage %s not in index; skipping", record.passage_id)
            continue
        if record.query_text not in query_vectors:
            query_vectors[record.query_text] = _unit_rows(
                index.backend.embed([record.query_text])
            )[0]
        score = float(np.clip(query_vectors[record.query_text] @ vector, -1.0, 1.0))
        (relevant_scores if record.relevant else irrelevant_scores).append(score)
    if not relevant_scores or not irrelevant_scores:
        raise InsufficientLabels("calibration needs both relevant and irrelevant qrels")

    distinct = sorted(set(relevant_scores + irrelevant_scores))
    candidates = list(distinct)
    candidates.extend((a + b) / 2.0 for a, b in zip(distinct, distinct[1:]))
    best_threshold = None
    best_accuracy = -math.inf
    for candidate in sorted(candidates):
        accuracy = balanced_accuracy(relevant_scores, irrelevant_scores, candidate)
        if accuracy > best_accuracy:
            best_accuracy = accuracy
            best_threshold = candidate
    assert best_threshold is not None
    return ThresholdCalibration(
        threshold=best_threshold,
        relevant_stats=ScoreStats.from_scores(relevant_scores),
        irrelevant_stats=ScoreStats.from_scores(irrelevant_scores),
    )


def retrieve_relevant(
    index: VectorIndex,
    query: str,
    calibration: ThresholdCalibration,
    k_max: int = 20,
) -> list[RetrievalHit]:
    """Top-k hits at or above the calibrated threshold.

    When nothing clears the threshold the single best hit is returned
    anyway: the mining loop needs at least one frontier candidate.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    hits = index.search(query, k_max)
    if not hits:
        return []
    passing = [h for h in hits if h.score >= calibration.threshold]
    return passing if passing else [hits[0]]


# -- web retrieval -------------------------------------------------------------


@dataclass(frozen=True)
class SearchResult:
    url: str
    title: str = ""
    snippet: str = ""


class SearchProvider(Protocol):
    def search(self, query: str) -> list[SearchResult]:
        ...


class PageReader(Protocol):
    def read(self, url: str) -> str:
        ...


class StaticSearchProvider:
    """In-memory provider: maps each query to a fixed result list."""

    def __init__(self, results: dict[str, list[SearchResult]]):
        self._results = results

    def search(self, query: str) -> list[SearchResult]:
        return list(self._results.get(query, ()))


class StaticPageReader:
    def __init__(self, pages: dict[str, str]):
        self._pages = pages

    def read(self, url: str) -> str:
        return self._pages[url]


_TAG_RE = re.compile(r"<script.*?</script>|<style.*?</style>|<[^>]+>", re.DOTALL | re.IGNORECASE)


class HttpPageReader:
    """Fetch a URL and strip markup; per-host politeness delay included."""

    def __init__(self, request_timeout: float = 30.0, politeness_delay: float = 0.5):
        import requests

        self._requests = requests
        self.request_timeout = request_timeout
        self.politeness_delay = politeness_delay
        self._last_fetch: dict[str, float] = {}
        self._lock = threading.Lock()

    def read(self, url: str) -> str:
        host = re.sub(r"^\w+://", "", url).split("/", 1)[0]
        with self._lock:
            wait = self._last_fetch.get(host, 0.0) + self.politeness_delay - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_fetch[host] = time.monotonic()
        response = self._requests.get(url, timeout=self.request_timeout)
        response.raise_for_status()
        return re.sub(r"\s+", " ", _TAG_RE.sub(" ", response.text)).strip()


def web_fetch(
    provider: SearchProvider,
    reader: PageReader,
    query: str,
    max_pages: int = 5,
    min_sentences: int = 5,
    max_sentences: int = 10,
) -> list[Passage]:
    """Search the web, read the top pages, and segment them into passages."""
    if max_pages < 1:
        raise ValueError("max_pages must be >= 1")
    try:
        results = provider.search(query)
    except Exception as exc:  # noqa: BLE001 - provider errors vary
        raise ProviderUnavailable(f"web search failed for {query!r}: {exc}") from exc
    passages: list[Passage] = []
    for result in results[:max_pages]:
        try:
            text = reader.read(result.url)
        except Exception as exc:  # noqa: BLE001
            logger.warning("skipping page %s: %s", result.url, exc)
            continue
        if not text.strip():
            continue
        for segment in segment_document(
            CorpusDocument(doc_id=result.url, text=text), min_sentences, max_sentences
        ):
            passages.append(
                Passage(
                    id=segment.id,
                    text=segment.text,
                    source=WebSource(url=result.url),
                    score=None,
                )
            )
    return passages

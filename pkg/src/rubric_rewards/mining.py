"""Iterative relevant-passage mining over an alternating query/passage tree.

Starting from the question, retrieval hits become passage nodes, each
mined passage is rewritten into new queries, and each surviving query
retrieves again. A path ends when a query finds no unseen passage or a
passage's rewrites are all duplicates; explicit budgets cap the whole
walk, and a budget-stopped partial tree is a valid result.
"""

from __future__ import annotations

import enum
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .core import Passage, Question, normalize_text
from .errors import RubricRewardsError
from .judge import Judge
from .retrieval import ThresholdCalibration, VectorIndex, retrieve_relevant

logger = logging.getLogger(__name__)


class NodeKind(enum.Enum):
    QUERY = "query"
    PASSAGE = "passage"


@dataclass(frozen=True)
class TreeNode:
    key: str
    kind: NodeKind
    text: str
    parent: Optional[str]
    depth: int
    order: int
    passage: Optional[Passage] = None


def _query_key(text: str) -> str:
    return "q:" + normalize_text(text)


def _passage_key(passage_id: str) -> str:
    return "p:" + passage_id


class SearchTree:
    """Alternating query/passage tree rooted at the original question."""

    def __init__(self, root_query: str):
        self.root_key = _query_key(root_query)
        root = TreeNode(
            key=self.root_key,
            kind=NodeKind.QUERY,
            text=root_query,
            parent=None,
            depth=0,
            order=0,
        )
        self._nodes: dict[str, TreeNode] = {root.key: root}
        self._children: dict[str, list[str]] = {root.key: []}
        self._order: list[str] = [root.key]

    # -- lookups -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self._nodes)

    def node(self, key: str) -> TreeNode:
        return self._nodes[key]

    def nodes(self) -> list[TreeNode]:
        return [self._nodes[k] for k in self._order]

    def children(self, key: str) -> list[str]:
        return list(self._children[key])

    def parent(self, key: str) -> Optional[TreeNode]:
        parent_key = self._nodes[key].parent
        return None if parent_key is None else self._nodes[parent_key]

    def has_query(self, text: str) -> bool:
        return _query_key(text) in self._nodes

    def has_passage(self, pid: str) -> bool:
        return _passage_key(pid) in self._nodes

    def query_texts(self) -> list[str]:
        return [n.text for n in self.nodes() if n.kind is NodeKind.QUERY]

    def passages(self) -> list[Passage]:
        return [n.passage for n in self.nodes() if n.kind is NodeKind.PASSAGE]

    # -- mutation ----------------------------------------------------------

    def _attach(self, node: TreeNode) -> str:
        self._nodes[node.key] = node
        self._children[node.key] = []
        self._children[node.parent].append(node.key)
        self._order.append(node.key)
        return node.key

    def add_query(self, text: str, parent_key: str) -> str:
        parent = self._nodes[parent_key]
        if parent.kind is not NodeKind.PASSAGE:
            raise ValueError("query nodes attach under passage nodes")
        if self.has_query(text):
            raise ValueError(f"duplicate query node: {text!r}")
        return self._attach(
            TreeNode(
                key=_query_key(text),
                kind=NodeKind.QUERY,
                text=text,
                parent=parent_key,
                depth=parent.depth + 1,
                order=len(self._order),
            )
        )

    def add_passage(self, passage: Passage, parent_key: str) -> str:
        parent = self._nodes[parent_key]
        if parent.kind is not NodeKind.QUERY:
            raise ValueError("passage nodes attach under query nodes")
        if self.has_passage(passage.id):
            raise ValueError(f"duplicate passage node: {passage.id}")
        return self._attach(
            TreeNode(
                key=_passage_key(passage.id),
                kind=NodeKind.PASSAGE,
                text=passage.text,
                parent=parent_key,
                depth=parent.depth + 1,
                order=len(self._order),
                passage=passage,
            )
        )

    # -- invariants and persistence -----------------------------------------

    def validate(self) -> None:
        """Assert alternation, uniqueness, connectivity, and acyclicity."""
        seen_queries: set[str] = set()
        seen_passages: set[str] = set()
        for node in self.nodes():
            if node.kind is NodeKind.QUERY:
                normalized = normalize_text(node.text)
                if normalized in seen_queries:
                    raise RubricRewardsError(f"duplicate query text: {node.text!r}")
                seen_queries.add(normalized)
            else:
                if node.passage is None:
                    raise RubricRewardsError("passage node without a passage")
                if node.passage.id in seen_passages:
                    raise RubricRewardsError(f"duplicate passage id: {node.passage.id}")
                seen_passages.add(node.passage.id)
            if node.parent is None:
                if node.key != self.root_key:
                    raise RubricRewardsError("non-root node without a parent")
                continue
            parent = self._nodes[node.parent]
            if parent.kind is node.kind:
                raise RubricRewardsError("edge does not alternate query/passage")
            if node.depth != parent.depth + 1:
                raise RubricRewardsError("node depth inconsistent with its parent")
        # Walk from the root: connected and acyclic iff the walk covers all nodes.
        reached = set()
        stack = [self.root_key]
        while stack:
            key = stack.pop()
            if key in reached:
                raise RubricRewardsError("cycle detected in search tree")
            reached.add(key)
            stack.extend(self._children[key])
        if reached != set(self._nodes):
            raise RubricRewardsError("search tree is not connected")

    def to_dict(self) -> dict:
        return {
            "root": self.root_key,
            "nodes": [
                {
                    "key": n.key,
                    "kind": n.kind.value,
                    "text": n.text,
                    "parent": n.parent,
                    "depth": n.depth,
                    "passage": None if n.passage is None else n.passage.to_dict(),
                }
                for n in self.nodes()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SearchTree":
        entries = data["nodes"]
        tree = cls(entries[0]["text"])
        for entry in entries[1:]:
            if entry["kind"] == NodeKind.QUERY.value:
                tree.add_query(entry["text"], entry["parent"])
            else:
                tree.add_passage(Passage.from_dict(entry["passage"]), entry["parent"])
        return tree


class FrontierQueue:
    """FIFO frontier: passages are expanded in breadth-first arrival order."""

    def __init__(self, items: Iterable[str] = ()):
        self._items: deque[str] = deque(items)

    def push(self, key: str) -> None:
        self._items.append(key)

    def pop(self) -> str:
        return self._items.popleft()

    def __len__(self) -> int:
        return len(self._items)

    def __bool__(self) -> bool:
        return bool(self._items)

    def order(self) -> list[str]:
        return list(self._items)


@dataclass(frozen=True)
class MiningBudget:
    """Hard caps on tree growth; mining on real corpora can run for hours."""

    max_nodes: int = 400
    max_depth: int = 8
    max_judge_calls: int = 2000
    wall_clock_limit: float = 7200.0

    def __post_init__(self) -> None:
        for name in ("max_nodes", "max_depth", "max_judge_calls", "wall_clock_limit"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class MiningStats:
    retrievals: int = 0
    rewrites: int = 0
    dedup_rejections: int = 0
    temporal_rejections: int = 0
    budget_exhaustions: int = 0
    judge_calls: int = 0

    def to_dict(self) -> dict:
        return dict(vars(self))


@dataclass
class MiningReport:
    question_id: str
    passages: list[Passage]
    tree: SearchTree
    stats: MiningStats

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "passages": [p.to_dict() for p in self.passages],
            "tree": self.tree.to_dict(),
            "stats": self.stats.to_dict(),
        }


class _BudgetClock:
    def __init__(self, budget: MiningBudget, stats: MiningStats):
        self.budget = budget
        self.stats = stats
        self.nodes_added = 0
        self.started = time.monotonic()
        self.exhausted = False

    def _exhaust(self, reason: str) -> None:
        if not self.exhausted:
            logger.info("mining budget exhausted: %s", reason)
        self.stats.budget_exhaustions += 1
        self.exhausted = True

    def time_ok(self) -> bool:
        if time.monotonic() - self.started > self.budget.wall_clock_limit:
            self._exhaust("wall clock limit")
            return False
        return True

    def take_node(self) -> bool:
        if self.nodes_added >= self.budget.max_nodes:
            self._exhaust("max nodes")
            return False
        self.nodes_added += 1
        return True

    def take_judge_call(self) -> bool:
        if self.stats.judge_calls >= self.budget.max_judge_calls:
            self._exhaust("max judge calls")
            return False
        self.stats.judge_calls += 1
        return True

    def depth_ok(self, depth: int) -> bool:
        if depth > self.budget.max_depth:
            self._exhaust("max depth")
            return False
        return True


def mine_passages(
    question: Question,
    index: VectorIndex,
    calibration: ThresholdCalibration,
    judge: Judge,
    budget: Optional[MiningBudget] = None,
    max_new_queries: int = 3,
    k_max: int = 20,
) -> MiningReport:
    """Mine the question-relevant passage set by iterative query rewriting.

    Seed retrieval hangs temporally-consistent passages under the root;
    each pending passage is rewritten into queries (screened against every
    existing query, exact match first, then the judge), and each surviving
    query retrieves and attaches unseen passages, which join the frontier.
    """
    budget = budget or MiningBudget()
    stats = MiningStats()
    clock = _BudgetClock(budget, stats)
    tree = SearchTree(question.text)
    frontier = FrontierQueue()

    def attach_hits(query_text: str, parent_key: str) -> None:
        if not clock.depth_ok(tree.node(parent_key).depth + 1):
            return
        hits = retrieve_relevant(index, query_text, calibration, k_max)
        stats.retrievals += 1
        for hit in hits:
            if not clock.time_ok():
                return
            if not clock.take_judge_call():
                return
            if not judge.check_temporal(query_text, hit.passage):
                stats.temporal_rejections += 1
                continue
            if tree.has_passage(hit.passage.id):
                continue
            if not clock.take_node():
                return
            frontier.push(tree.add_passage(hit.passage, parent_key))

    attach_hits(question.text, tree.root_key)

    while frontier and not clock.exhausted and clock.time_ok():
        passage_key = frontier.pop()
        passage_node = tree.node(passage_key)
        parent_query = tree.parent(passage_key)
        assert parent_query is not None
        if not clock.depth_ok(passage_node.depth + 1):
            continue
        if not clock.take_judge_call():
            break
        candidates = judge.rewrite_queries(
            question, parent_query.text, passage_node.passage, max_new_queries
        )
        stats.rewrites += len(candidates)
        new_query_keys = []
        for candidate in candidates:
            if clock.exhausted or not clock.time_ok():
                break
            if tree.has_query(candidate):
                stats.dedup_rejections += 1
                continue
            if not clock.take_judge_call():
                break
            if judge.is_duplicate_query(candidate, tree.query_texts()):
                stats.dedup_rejections += 1
                continue
            if not clock.take_node():
                break
            new_query_keys.append(tree.add_query(candidate, passage_key))
        for query_key in new_query_keys:
            if clock.exhausted or not clock.time_ok():
                break
            attach_hits(tree.node(query_key).text, query_key)

    report = MiningReport(
        question_id=question.id, passages=tree.passages(), tree=tree, stats=stats
    )
    tree.validate()
    return report

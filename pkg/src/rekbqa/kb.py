"""Triple store, vocabularies, subgraphs and the relation-centric views built on them."""
from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class KBParseError(ValueError):
    """Raised for malformed knowledge-base files."""


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class Vocab:
    """Dense string <-> id mapping in first-appearance order."""

    def __init__(self, items: Iterable[str] = ()):
        self._ids: dict[str, int] = {}
        self._items: list[str] = []
        for item in items:
            self.add(item)

    def add(self, item: str) -> int:
        idx = self._ids.get(item)
        if idx is None:
            idx = len(self._items)
            self._ids[item] = idx
            self._items.append(item)
        return idx

    def __getitem__(self, item: str) -> int:
        return self._ids[item]

    def __contains__(self, item: object) -> bool:
        return item in self._ids

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def name(self, idx: int) -> str:
        return self._items[idx]

    def get(self, item: str, default=None):
        return self._ids.get(item, default)

    @property
    def items(self) -> list[str]:
        return list(self._items)


class KnowledgeBase:
    """Directed labeled multigraph of (head, relation, tail) facts.

    Treated as immutable once built; ``out_index`` and ``in_index`` map an
    entity id to ``(relation, neighbor)`` pairs, one entry per triple.
    """

    def __init__(self, entities: Vocab, relations: Vocab, triples: Sequence[Triple]):
        self.entities = entities
        self.relations = relations
        self.triples: tuple[Triple, ...] = tuple(Triple(*t) for t in triples)
        out_index: dict[int, list[tuple[int, int]]] = defaultdict(list)
        in_index: dict[int, list[tuple[int, int]]] = defaultdict(list)
        for h, r, t in self.triples:
            out_index[h].append((r, t))
            in_index[t].append((r, h))
        self.out_index = dict(out_index)
        self.in_index = dict(in_index)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @classmethod
    def from_named_triples(cls, rows: Iterable[tuple[str, str, str]]) -> "KnowledgeBase":
        entities, relations = Vocab(), Vocab()
        triples = []
        for h, r, t in rows:
            hid = entities.add(h)
            rid = relations.add(r)
            tid = entities.add(t)
            triples.append(Triple(hid, rid, tid))
        return cls(entities, relations, triples)

    def neighbors(self, entity: int) -> list[tuple[int, int]]:
        """All (relation, neighbor) pairs touching ``entity`` in either direction."""
        return self.out_index.get(entity, []) + self.in_index.get(entity, [])

    def named(self, triple: Triple) -> tuple[str, str, str]:
        return (
            self.entities.name(triple.head),
            self.relations.name(triple.relation),
            self.entities.name(triple.tail),
        )

    def serialize(self) -> str:
        return "".join("\t".join(self.named(t)) + "\n" for t in self.triples)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.serialize(), encoding="utf-8")

    def entity_ids(self, names: Iterable[str]) -> list[int]:
        out = []
        for name in names:
            if name not in self.entities:
                raise KeyError(f"unknown entity {name!r}")
            out.append(self.entities[name])
        return out


def load_kb(path: str | Path) -> KnowledgeBase:
    """Read a tab-separated ``head<TAB>relation<TAB>tail`` file."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                raise KBParseError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            rows.append(tuple(parts))
    if not rows:
        raise KBParseError(f"{path}: no triples")
    return KnowledgeBase.from_named_triples(rows)


@dataclass(frozen=True)
class Subgraph:
    """Candidate neighbourhood of one question.

    ``candidates`` holds global entity ids; ``local`` maps them back to row
    positions. ``triples`` are global-id triples whose endpoints are both
    candidates.
    """

    candidates: tuple[int, ...]
    triples: tuple[Triple, ...]
    topic_entities: tuple[int, ...]
    local: dict[int, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if not self.local:
            object.__setattr__(self, "local", {e: i for i, e in enumerate(self.candidates)})
        for t in self.topic_entities:
            if t not in self.local:
                raise ValueError(f"topic entity {t} missing from candidates")
        for h, _, t in self.triples:
            if h not in self.local or t not in self.local:
                raise ValueError("subgraph triple endpoint outside candidates")

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)

    @property
    def relation_ids(self) -> list[int]:
        return sorted({r for _, r, _ in self.triples})

    @classmethod
    def induced(cls, kb: KnowledgeBase, candidates: Sequence[int], topics: Sequence[int]) -> "Subgraph":
        cand = tuple(candidates)
        members = set(cand)
        triples = []
        for e in cand:
            for r, t in kb.out_index.get(e, ()):
                if t in members:
                    triples.append(Triple(e, r, t))
        return cls(cand, tuple(triples), tuple(topics))

    def local_edges(self) -> np.ndarray:
        """(n_triples, 3) int array of (local head, relation, local tail)."""
        if not self.triples:
            return np.zeros((0, 3), dtype=np.int64)
        return np.array([(self.local[h], r, self.local[t]) for h, r, t in self.triples], dtype=np.int64)


@dataclass
class QAExample:
    qid: str
    question: list[str]
    topic_entities: list[int]
    answers: set[int]
    subgraph: Subgraph | None = None
    text: str = ""
    split: str = ""


def incidence_sets(kb: KnowledgeBase) -> list[set[int]]:
    """For each relation, the set of entities it touches as head or tail."""
    inc: list[set[int]] = [set() for _ in range(kb.n_relations)]
    for h, r, t in kb.triples:
        inc[r].add(h)
        inc[r].add(t)
    return inc


def relation_orient(kb: KnowledgeBase) -> dict[tuple[int, int], int]:
    """Relation-oriented view of the KB.

    Returns a symmetric mapping ``(r, r') -> number of distinct shared
    entities`` for every pair of different relations touching a common
    entity.
    """
    per_entity: dict[int, set[int]] = defaultdict(set)
    for h, r, t in kb.triples:
        per_entity[h].add(r)
        per_entity[t].add(r)
    counts: dict[tuple[int, int], int] = defaultdict(int)
    for rels in per_entity.values():
        for a, b in itertools.combinations(sorted(rels), 2):
            counts[(a, b)] += 1
            counts[(b, a)] += 1
    return dict(sorted(counts.items()))


def surrounding_relation_matrix(subgraph: Subgraph, n_relations: int) -> np.ndarray:
    """Row-normalised candidate x relation incidence counts (both directions)."""
    w = np.zeros((subgraph.n_candidates, n_relations), dtype=np.float64)
    for h, r, t in subgraph.triples:
        w[subgraph.local[h], r] += 1.0
        if t != h:
            w[subgraph.local[t], r] += 1.0
    sums = w.sum(axis=1, keepdims=True)
    np.divide(w, sums, out=w, where=sums > 0)
    return w


def incident_relation_distribution(subgraph: Subgraph, entities: Iterable[int], n_relations: int) -> np.ndarray | None:
    """Normalised counts of subgraph edges touching any of ``entities``, per relation.

    Returns None when no edge touches the entities.
    """
    targets = set(entities)
    counts = np.zeros(n_relations, dtype=np.float64)
    for h, r, t in subgraph.triples:
        if h in targets or t in targets:
            counts[r] += 1.0
    total = counts.sum()
    if total == 0:
        return None
    return counts / total


def uniform_over(relation_ids: Sequence[int], n_relations: int) -> np.ndarray:
    out = np.zeros(n_relations, dtype=np.float64)
    if relation_ids:
        out[list(relation_ids)] = 1.0 / len(relation_ids)
    elif n_relations:
        out[:] = 1.0 / n_relations
    return out

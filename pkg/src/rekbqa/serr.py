"""Stem-extraction re-ranking of predicted answer candidates."""
from __future__ import annotations

import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import snowballstemmer

from .kb import Subgraph

log = logging.getLogger(__name__)

_stemmer = snowballstemmer.stemmer("porter")

SPLIT_RE = re.compile(r"[._\s]+")
CAMEL_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")
WORD_RE = re.compile(r"[a-z0-9]+")

DEFAULT_STOPWORDS = frozenset("""
a about above after again against all am an and any are as at be because been before being below between
both but by can could did do does doing down during each few for from further had has have having he her
here hers herself him himself his how i if in into is it its itself just me more most my myself no nor not
now of off on once only or other our ours ourselves out over own same she should so some such than that the
their theirs them themselves then there these they this those through to too under until up very was we were
what when where which while who whom whose why will with would you your yours yourself yourselves name
""".split())


def stem(word: str) -> str:
    """Original Porter suffix stripping on a lowercase word."""
    return _stemmer.stemWord(word.lower())


def load_stopwords(path: str | Path) -> frozenset[str]:
    with open(path, encoding="utf-8") as fh:
        return frozenset(w.strip().lower() for w in fh if w.strip())


def relation_tokens(surface: str) -> list[str]:
    parts = []
    for chunk in SPLIT_RE.split(surface):
        parts.extend(p.lower() for p in CAMEL_RE.split(chunk) if p)
    return parts


class RelationTrie:
    """Stem -> relation ids multimap, built once per KB."""

    def __init__(self):
        self.index: dict[str, set[int]] = defaultdict(set)
        self.stems: dict[int, tuple[str, ...]] = {}

    def update(self, relation: int, stems: Iterable[str]) -> None:
        stems = tuple(dict.fromkeys(stems))
        self.stems[relation] = stems
        for s in stems:
            self.index[s].add(relation)

    def lookup(self, stem_: str) -> set[int]:
        return self.index.get(stem_, set())

    def __len__(self) -> int:
        return len(self.index)


def build_relation_trie(relations: Sequence[str] | dict[int, str]) -> RelationTrie:
    """``relations``: surfaces indexed by relation id (list or mapping)."""
    items = relations.items() if isinstance(relations, dict) else enumerate(relations)
    trie = RelationTrie()
    for rid, surface in items:
        toks = relation_tokens(surface or "")
        if not toks:
            log.warning("relation %d has an empty surface form; no stems indexed", rid)
            continue
        trie.update(rid, (stem(t) for t in toks))
    return trie


def extract_stems(question: Sequence[str] | str, stopwords: Iterable[str] = DEFAULT_STOPWORDS) -> list[str]:
    """Lowercased, stopword-free, deduplicated stems in question order."""
    if isinstance(question, str):
        tokens = WORD_RE.findall(question.lower())
    else:
        tokens = [t.lower() for t in question]
    stop = stopwords if isinstance(stopwords, (set, frozenset)) else set(stopwords)
    pool: dict[str, None] = {}
    for tok in tokens:
        if tok in stop:
            continue
        pool.setdefault(stem(tok), None)
    return list(pool)


def match_relations(pool: Sequence[str], trie: RelationTrie, min_stem_matches: int = 1) -> list[int]:
    hits: dict[int, int] = defaultdict(int)
    for s in pool:
        for rid in trie.lookup(s):
            hits[rid] += 1
    return sorted(r for r, k in hits.items() if k >= min_stem_matches)


@dataclass(frozen=True)
class RerankConfig:
    h1: float = 1.5
    h2: float = 1.2
    min_stem_matches: int = 1

    def __post_init__(self):
        if not self.h1 > self.h2 > 1.0:
            raise ValueError("boost factors must satisfy h1 > h2 > 1")
        if self.min_stem_matches < 1:
            raise ValueError("min_stem_matches must be >= 1")


@dataclass
class Boost:
    candidate: int
    factor: float
    kind: str  # "full" or "partial"
    relations: list[int] = field(default_factory=list)


@dataclass
class RerankResult:
    candidates: list[int]
    confidences: list[float]
    boosts: list[Boost]
    matched_relations: list[int]


def _relation_index(subgraph: Subgraph, relations: Iterable[int]):
    wanted = set(relations)
    by_rel = defaultdict(list)
    for h, r, t in subgraph.triples:
        if r in wanted:
            by_rel[r].append((h, t))
    return by_rel


def rerank(question, candidates: Sequence[int], confidences: Sequence[float], subgraph: Subgraph,
           trie: RelationTrie, cfg: RerankConfig = RerankConfig(), stopwords=DEFAULT_STOPWORDS,
           topics: Sequence[int] | None = None) -> RerankResult:
    """Boost candidates supported by question-matched relations and re-sort.

    A candidate linked to a topic entity through a matched relation (either
    direction) is multiplied by ``h1``; otherwise, if the candidate or a
    topic entity touches a matched relation, by ``h2``. Without any boost
    the input is returned unchanged.
    """
    unchanged = RerankResult(list(candidates), list(confidences), [], [])
    pool = extract_stems(question, stopwords)
    matched = match_relations(pool, trie, cfg.min_stem_matches)
    if not matched:
        return unchanged
    topics = list(subgraph.topic_entities if topics is None else topics)
    topic_set = set(topics)
    by_rel = _relation_index(subgraph, matched)
    full_links: dict[int, set[int]] = defaultdict(set)
    touching: dict[int, set[int]] = defaultdict(set)
    for r, pairs in by_rel.items():
        for h, t in pairs:
            touching[h].add(r)
            touching[t].add(r)
            if h in topic_set:
                full_links[t].add(r)
            if t in topic_set:
                full_links[h].add(r)
    topic_rels = sorted(set().union(*(touching.get(t, set()) for t in topics))) if topics else []
    new_conf = list(map(float, confidences))
    boosts: list[Boost] = []
    for i, c in enumerate(candidates):
        if c in full_links:
            new_conf[i] *= cfg.h1
            boosts.append(Boost(c, cfg.h1, "full", sorted(full_links[c])))
        elif c in touching or topic_rels:
            new_conf[i] *= cfg.h2
            boosts.append(Boost(c, cfg.h2, "partial", sorted(touching.get(c, set()) | set(topic_rels))))
    if not boosts:
        return RerankResult(list(candidates), list(confidences), [], matched)
    total = sum(new_conf)
    if total > 0:
        new_conf = [x / total for x in new_conf]
    order = sorted(range(len(candidates)), key=lambda i: (-new_conf[i], i))
    return RerankResult([candidates[i] for i in order], [new_conf[i] for i in order], boosts, matched)

"""Per-question candidate retrieval: approximate personalized PageRank by push."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kb import KnowledgeBase, Subgraph, incident_relation_distribution, uniform_over


@dataclass(frozen=True)
class RetrievalConfig:
    max_hops: int = 3
    max_candidates: int = 2000
    ppr_alpha: float = 0.15
    ppr_epsilon: float = 1e-4

    def __post_init__(self):
        if self.max_hops < 1:
            raise ValueError("max_hops must be >= 1")
        if not 0.0 < self.ppr_alpha < 1.0:
            raise ValueError("ppr_alpha must lie in (0, 1)")
        if self.ppr_epsilon <= 0:
            raise ValueError("ppr_epsilon must be positive")


def undirected_adjacency(kb: KnowledgeBase) -> list[list[int]]:
    """Neighbour lists with one entry per incident triple (multi-edges kept)."""
    adj: list[list[int]] = [[] for _ in range(kb.n_entities)]
    for h, _, t in kb.triples:
        adj[h].append(t)
        if t != h:
            adj[t].append(h)
    return adj


def push_ppr(adj: Sequence[Sequence[int]], seeds: Sequence[int], alpha: float, epsilon: float) -> dict[int, float]:
    """Andersen-Chung-Lang push for personalized PageRank.

    The restart distribution is uniform on ``seeds``. A node is pushed while
    its residual is at least ``epsilon * degree``; nodes without neighbours
    absorb their residual. Returns the sparse approximate score vector.
    """
    p: dict[int, float] = {}
    r: dict[int, float] = {}
    for s in seeds:
        r[s] = r.get(s, 0.0) + 1.0 / len(seeds)
    queue = deque(sorted(r))
    queued = set(queue)
    while queue:
        u = queue.popleft()
        queued.discard(u)
        ru = r.get(u, 0.0)
        deg = len(adj[u])
        if deg == 0:
            p[u] = p.get(u, 0.0) + ru
            r[u] = 0.0
            continue
        if ru < epsilon * deg:
            continue
        p[u] = p.get(u, 0.0) + alpha * ru
        r[u] = 0.0
        share = (1.0 - alpha) * ru / deg
        for v in adj[u]:
            rv = r.get(v, 0.0) + share
            r[v] = rv
            if v not in queued and rv >= epsilon * max(len(adj[v]), 1):
                queue.append(v)
                queued.add(v)
    return p


def hop_distances(adj: Sequence[Sequence[int]], seeds: Sequence[int], max_hops: int) -> dict[int, int]:
    dist = {s: 0 for s in seeds}
    frontier = deque(seeds)
    while frontier:
        u = frontier.popleft()
        if dist[u] == max_hops:
            continue
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                frontier.append(v)
    return dist


def rank_candidates(scores: dict[int, float], allowed: dict[int, int], topics: Sequence[int], cap: int) -> list[int]:
    """Topics first, then allowed entities by descending score, ties by id."""
    chosen = list(dict.fromkeys(topics))
    taken = set(chosen)
    rest = sorted((e for e in allowed if e not in taken), key=lambda e: (-scores.get(e, 0.0), e))
    chosen.extend(rest[: max(cap - len(chosen), 0)])
    return chosen


def retrieve_subgraph(kb: KnowledgeBase, topics: Sequence[int], cfg: RetrievalConfig, adj=None) -> Subgraph:
    for t in topics:
        if not 0 <= t < kb.n_entities:
            raise KeyError(f"unknown topic entity id {t}")
    if cfg.max_candidates < len(set(topics)):
        raise ValueError("max_candidates smaller than the number of topic entities")
    adj = adj if adj is not None else undirected_adjacency(kb)
    seeds = sorted(set(topics))
    allowed = hop_distances(adj, seeds, cfg.max_hops)
    scores = push_ppr(adj, seeds, cfg.ppr_alpha, cfg.ppr_epsilon)
    candidates = rank_candidates(scores, allowed, list(topics), cfg.max_candidates)
    return Subgraph.induced(kb, candidates, list(dict.fromkeys(topics)))


def init_relation_state(subgraph: Subgraph, topics: Sequence[int], n_relations: int) -> np.ndarray:
    """Distribution over relations of subgraph edges touching the topic entities."""
    dist = incident_relation_distribution(subgraph, topics, n_relations)
    if dist is None:
        return uniform_over(subgraph.relation_ids, n_relations)
    return dist

import numpy as np
import torch

from rekbqa.kb import KnowledgeBase, QAExample, Subgraph

# filled by the acceptance suite, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def fd_relative_error(loss_fn, params, h=1e-5, floor=1e-7):
    """Largest relative error between autograd and central finite differences.

    ``loss_fn`` takes no arguments and returns a scalar tensor built from
    ``params`` (float64 leaves with requires_grad). Per tensor the error is
    ||g_auto - g_fd|| / max(||g_auto||, ||g_fd||, floor); the floor keeps
    exactly-zero gradients (e.g. a bias under softmax shift invariance) from
    dividing roundoff by zero. h = 1e-5 sits near the float64 optimum
    eps**(1/3) for central differences.
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    worst = 0.0
    for p in params:
        analytic = p.grad.detach().clone().reshape(-1)
        numeric = torch.zeros_like(analytic)
        flat = p.data.reshape(-1)
        with torch.no_grad():
            for k in range(flat.numel()):
                orig = flat[k].item()
                flat[k] = orig + h
                up = loss_fn().item()
                flat[k] = orig - h
                down = loss_fn().item()
                flat[k] = orig
                numeric[k] = (up - down) / (2 * h)
        denom = max(analytic.norm().item(), numeric.norm().item(), floor)
        worst = max(worst, (analytic - numeric).norm().item() / denom)
    return worst


def power_iteration_ppr(adj, seeds, alpha, iters=2000):
    """Exact personalized PageRank of the non-lazy walk on neighbour lists."""
    n = len(adj)
    W = np.zeros((n, n))
    for u, nbrs in enumerate(adj):
        for v in nbrs:
            W[u, v] += 1.0 / len(nbrs)
        if not nbrs:
            W[u, u] = 1.0
    s = np.zeros(n)
    s[list(seeds)] = 1.0 / len(seeds)
    pi = s.copy()
    for _ in range(iters):
        pi = alpha * s + (1 - alpha) * pi @ W
    return pi


def tiny_instance(seed=0, n_c=3, n_r=4, extra_edges=3, order=None):
    """A random question over ``n_c`` candidates and ``n_r`` relations, prepared for the model.

    Returns (kb, table, prepared) with e0 as topic and the last entity as answer;
    ``order`` permutes the candidate list without changing the graph.
    """
    from rekbqa.encoder import EmbeddingTable
    from rekbqa.model import prepare_example

    rng = np.random.default_rng(seed)
    ents = [f"e{i}" for i in range(n_c)]
    rows = [(ents[i], f"r{i % n_r}", ents[i + 1]) for i in range(n_c - 1)]
    rows += [(ents[rng.integers(n_c)], f"r{rng.integers(n_r)}", ents[rng.integers(n_c)]) for _ in range(extra_edges)]
    rows += [(f"pad{r}", f"r{r}", f"pad{r}x") for r in range(n_r)]  # make every relation exist
    kb = KnowledgeBase.from_named_triples(rows)
    cand = kb.entity_ids(ents)
    listed = [cand[i] for i in order] if order is not None else cand
    sg = Subgraph.induced(kb, listed, cand[:1])
    table = EmbeddingTable(["what", "is", "x"], word_dim=4, seed=seed, dtype=torch.float64)
    ex = QAExample("q0", ["what", "is", "x"], cand[:1], {cand[-1]}, sg)
    return kb, table, prepare_example(ex, kb, table)


def symmetric_pair_kb():
    """r1 and r2 run in parallel around a 3-cycle; r3 hangs off one node."""
    rows = [(h, r, t) for r in ("r1", "r2") for h, t in (("a", "b"), ("b", "c"), ("c", "a"))]
    rows += [("a", "r3", "d"), ("d", "r4", "e")]
    return KnowledgeBase.from_named_triples(rows)

"""Variational graph auto-encoder over the relation-oriented graph.

The learned relation embeddings yield the prior-probability-of-relation
matrix, a row-wise softmax over pairwise embedding similarities.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .kb import KnowledgeBase, relation_orient

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class RelationGraph:
    A: np.ndarray  # binary, symmetric, unit diagonal
    X: np.ndarray  # clamped connectivity counts
    tau: float = 2000

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        """Undirected off-diagonal edges as (i, j) with i < j."""
        i, j = np.nonzero(np.triu(self.A, k=1))
        return list(zip(i.tolist(), j.tolist()))

    def without_edges(self, removed) -> "RelationGraph":
        A, X = self.A.copy(), self.X.copy()
        for i, j in removed:
            A[i, j] = A[j, i] = 0.0
            X[i, j] = X[j, i] = 0.0
        return RelationGraph(A, X, self.tau)


def build_relation_graph(kb: KnowledgeBase, tau: float = 2000) -> RelationGraph:
    if tau <= 0:
        raise ValueError("tau must be positive")
    n = kb.n_relations
    A = np.eye(n)
    X = np.zeros((n, n))
    for (i, j), c in relation_orient(kb).items():
        A[i, j] = 1.0
        X[i, j] = min(c, tau)
    degree = np.bincount([t.relation for t in kb.triples], minlength=n)
    X[np.arange(n), np.arange(n)] = np.minimum(degree, tau)
    return RelationGraph(A, X, tau)


def graph_from_adjacency(adj: np.ndarray, tau: float = 2000) -> RelationGraph:
    """Relation graph from a bare 0/1 adjacency; features are the adjacency plus self-degree."""
    A = (np.asarray(adj) > 0).astype(np.float64)
    np.fill_diagonal(A, 0.0)
    X = A.copy()
    X[np.diag_indices_from(X)] = np.minimum(A.sum(1), tau)
    np.fill_diagonal(A, 1.0)
    return RelationGraph(A, X, tau)


def scaled_features(X: np.ndarray) -> np.ndarray:
    """Clamped counts divided by their maximum; raw counts overflow the log-std head."""
    top = X.max()
    return X / top if top > 0 else X


def normalized_adjacency(A: np.ndarray) -> np.ndarray:
    d = A.sum(1)
    inv = np.where(d > 0, 1.0 / np.sqrt(np.maximum(d, 1e-300)), 0.0)
    return inv[:, None] * A * inv[None, :]


@dataclass
class VGAEConfig:
    hidden_dim: int = 64
    latent_dim: int = 32
    epochs: int = 200
    lr: float = 0.01
    compound: str = "sample"  # "sample" (reparameterised) or "concat" ([mu ; sigma])


def glorot(fan_in: int, fan_out: int, gen: torch.Generator, dtype) -> torch.Tensor:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return (torch.rand(fan_in, fan_out, generator=gen, dtype=dtype) * 2 - 1) * bound


class VGAE(nn.Module):
    """Two-layer GCN encoder with shared first layer; inner-product decoder."""

    def __init__(self, n_features: int, hidden_dim: int, latent_dim: int, seed: int = 0,
                 compound: str = "sample", dtype=torch.float32):
        super().__init__()
        if compound not in ("sample", "concat"):
            raise ValueError(f"unknown compound mode {compound!r}")
        gen = torch.Generator().manual_seed(seed)
        self.W0 = nn.Parameter(glorot(n_features, hidden_dim, gen, dtype))
        self.W_mu = nn.Parameter(glorot(hidden_dim, latent_dim, gen, dtype))
        self.W_sigma = nn.Parameter(glorot(hidden_dim, latent_dim, gen, dtype))
        self.compound = compound

    def encode(self, X: torch.Tensor, A_hat: torch.Tensor):
        h = torch.relu(A_hat @ X @ self.W0)
        mu = A_hat @ h @ self.W_mu
        logstd = A_hat @ h @ self.W_sigma
        return mu, logstd

    def latent(self, mu, logstd, noise=None):
        if self.compound == "concat":
            return torch.cat([mu, torch.exp(logstd)], dim=1)
        if noise is None:
            return mu
        return mu + torch.exp(logstd) * noise

    def embed(self, X, A_hat) -> torch.Tensor:
        """Deterministic embeddings used at inference (no sampling)."""
        mu, logstd = self.encode(X, A_hat)
        return self.latent(mu, logstd, noise=None)


def kl_term(mu: torch.Tensor, logstd: torch.Tensor) -> torch.Tensor:
    """KL(q(z|X,A) || N(0, I)), averaged over nodes then scaled by 1/n."""
    n = mu.shape[0]
    per_node = -0.5 * torch.sum(1 + 2 * logstd - mu ** 2 - torch.exp(2 * logstd), dim=1)
    return per_node.mean() / n


def vgae_loss(model: VGAE, X: torch.Tensor, A_hat: torch.Tensor, target: torch.Tensor,
              noise: torch.Tensor | None):
    """Negative ELBO: reweighted reconstruction cross-entropy plus KL.

    ``target`` is the adjacency to reconstruct (self-loops included).
    Returns (total, reconstruction, kl).
    """
    mu, logstd = model.encode(X, A_hat)
    z = model.latent(mu, logstd, noise)
    logits = z @ z.T
    n2 = target.numel()
    n_pos = target.sum()
    n_neg = n2 - n_pos
    if n_neg > 0:
        pos_weight = n_neg / n_pos
        norm = n2 / (2 * n_neg)
    else:
        # complete graph: nothing to reweight
        pos_weight = torch.ones((), dtype=target.dtype)
        norm = 1.0
    recon = norm * F.binary_cross_entropy_with_logits(logits, target, pos_weight=pos_weight)
    kl = kl_term(mu, logstd)
    return recon + kl, recon, kl


@dataclass
class VgaeResult:
    model: VGAE
    losses: list[float]


def train_qa_vgae(graph: RelationGraph, cfg: VGAEConfig = VGAEConfig(), seed: int = 0,
                  dtype=torch.float32) -> VgaeResult:
    if cfg.latent_dim < 2:
        raise ValueError("latent_dim must be >= 2")
    torch.manual_seed(seed)
    X = torch.as_tensor(scaled_features(graph.X), dtype=dtype)
    A_hat = torch.as_tensor(normalized_adjacency(graph.A), dtype=dtype)
    target = torch.as_tensor(graph.A, dtype=dtype)
    model = VGAE(graph.n, cfg.hidden_dim, cfg.latent_dim, seed=seed, compound=cfg.compound, dtype=dtype)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(seed + 1)
    losses = []
    for epoch in range(cfg.epochs):
        opt.zero_grad()
        noise = torch.randn(graph.n, cfg.latent_dim, generator=gen, dtype=dtype)
        loss, _, _ = vgae_loss(model, X, A_hat, target, noise)
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"non-finite VGAE loss at epoch {epoch} (lr={cfg.lr})")
        loss.backward()
        opt.step()
        losses.append(loss.item())
    log.debug("vgae: final loss %.4f after %d epochs", losses[-1] if losses else float("nan"), cfg.epochs)
    return VgaeResult(model, losses)


def embeddings(model: VGAE, graph: RelationGraph) -> np.ndarray:
    dtype = model.W0.dtype
    with torch.no_grad():
        X = torch.as_tensor(scaled_features(graph.X), dtype=dtype)
        A_hat = torch.as_tensor(normalized_adjacency(graph.A), dtype=dtype)
        return model.embed(X, A_hat).double().numpy()


def row_softmax(S: np.ndarray) -> np.ndarray:
    S = S - S.max(axis=1, keepdims=True)
    E = np.exp(S)
    return E / E.sum(axis=1, keepdims=True)


def compute_ppr(model: VGAE, graph: RelationGraph) -> np.ndarray:
    """Row-stochastic relation prior from mean embeddings."""
    Z = embeddings(model, graph)
    return row_softmax(Z @ Z.T)


def auc_score(pos_scores, neg_scores) -> float:
    """Probability a random positive outscores a random negative; ties count half."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC needs at least one positive and one negative pair")
    greater = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((greater + 0.5 * ties) / (pos.size * neg.size))


def link_prediction_auc(model: VGAE, graph: RelationGraph, positives, negatives) -> float:
    Z = embeddings(model, graph)
    def score(pairs):
        return [1.0 / (1.0 + math.exp(-float(Z[i] @ Z[j]))) for i, j in pairs]
    return auc_score(score(positives), score(negatives))


def split_edges(graph: RelationGraph, frac: float, seed: int):
    """Hold out a fraction of edges plus an equal number of non-edges.

    Returns (training graph, held-out positives, held-out negatives).
    """
    rng = np.random.default_rng(seed)
    edges = graph.edges()
    n_test = max(1, int(round(frac * len(edges))))
    order = rng.permutation(len(edges))
    held = [edges[k] for k in order[:n_test]]
    non_edges = [(i, j) for i in range(graph.n) for j in range(i + 1, graph.n) if graph.A[i, j] == 0]
    pick = rng.permutation(len(non_edges))[:n_test]
    negatives = [non_edges[k] for k in sorted(pick)]
    return graph.without_edges(held), held, negatives


def planted_partition(n: int, communities: int, p_in: float, p_out: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    block = np.arange(n) % communities
    probs = np.where(block[:, None] == block[None, :], p_in, p_out)
    upper = np.triu(rng.random((n, n)) < probs, k=1)
    return (upper | upper.T).astype(np.float64)

"""Multi-step answer reasoning over subgraph candidates.

Each step fuses the previous candidate state (after distribution-weighted
neighbour aggregation along subgraph edges) with the instruction-gated
static candidate representation, lets candidates interact, and emits an
answer distribution plus an auxiliary distribution over surrounding
relations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .kb import Subgraph, incident_relation_distribution, uniform_over

KL_EPS = 1e-12
VARIANTS = ("linear", "recurrent", "transformer")


def init_candidates(W_C, P, V_R):
    """Static candidate vectors: surrounding relations -> relation prior -> embeddings."""
    if W_C.shape[-1] != P.shape[0] or P.shape[1] != V_R.shape[0]:
        raise ValueError(f"shape mismatch: W_C {tuple(W_C.shape)}, P {tuple(P.shape)}, V_R {tuple(V_R.shape)}")
    return W_C @ P @ V_R


class SelfAttentionBlock(nn.Module):
    """Post-norm transformer encoder block without positional encodings."""

    def __init__(self, dim: int, heads: int = 2, ff_mult: int = 2, dropout: float = 0.0):
        super().__init__()
        if dim % heads:
            raise ValueError("dim must be divisible by heads")
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, ff_mult * dim), nn.ReLU(), nn.Linear(ff_mult * dim, dim))
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        B, N, D = x.shape
        hd = D // self.heads
        q, k, v = self.qkv(x).view(B, N, 3, self.heads, hd).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-1, -2) / math.sqrt(hd)
        scores = scores.masked_fill(~mask[:, None, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        ctx = (attn @ v).transpose(1, 2).reshape(B, N, D)
        x = self.norm1(x + self.drop(self.out(ctx)))
        x = self.norm2(x + self.drop(self.ff(x)))
        return x * mask.unsqueeze(-1).to(x.dtype)


class LinearInteraction(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.lin = nn.Linear(dim, dim)
        self.norm = nn.LayerNorm(dim)

    def forward(self, x, mask):
        return self.norm(x + torch.relu(self.lin(x))) * mask.unsqueeze(-1).to(x.dtype)


class RecurrentInteraction(nn.Module):
    """LSTM over candidates in list order (order-dependent by construction)."""

    def __init__(self, dim: int):
        super().__init__()
        self.lstm = nn.LSTM(dim, dim, batch_first=True)
        self.norm = nn.LayerNorm(dim)

    def forward(self, x, mask):
        out, _ = self.lstm(x)
        return self.norm(x + out) * mask.unsqueeze(-1).to(x.dtype)


@dataclass
class ReasonerConfig:
    dim: int = 50
    num_step: int = 3
    variant: str = "transformer"
    heads: int = 2
    dropout: float = 0.3
    gate_source: str = "initial"  # V_c^(0) or "previous" V_c^(t-1) inside the fusion gate


@dataclass
class Batch:
    """Padded tensors for B questions with up to N candidates each."""

    W_C: torch.Tensor        # (B, N, n_r)
    cand_mask: torch.Tensor  # (B, N) bool
    p0: torch.Tensor         # (B, N) initial distribution on topic entities
    S_R0: torch.Tensor       # (B, n_r)
    edge_head: torch.Tensor  # (E,) flat index b * N + i
    edge_rel: torch.Tensor   # (E,)
    edge_tail: torch.Tensor  # (E,)
    edge_batch: torch.Tensor  # (E,)
    gold_c: torch.Tensor | None = None  # (B, N)
    gold_r: torch.Tensor | None = None  # (B, n_r)
    has_c: torch.Tensor | None = None   # (B,) bool
    has_r: torch.Tensor | None = None   # (B,) bool

    @property
    def shape(self):
        return self.cand_mask.shape


@dataclass
class StepOutput:
    V_c: torch.Tensor   # (B, N, d)
    S_R: torch.Tensor   # (B, n_r)
    p_c: torch.Tensor   # (B, N)
    p_r: torch.Tensor   # (B, n_r)


class Reasoner(nn.Module):
    def __init__(self, n_relations: int, cfg: ReasonerConfig, seed: int = 0):
        super().__init__()
        if cfg.variant not in VARIANTS:
            raise ValueError(f"unknown interaction variant {cfg.variant!r}")
        if cfg.gate_source not in ("initial", "previous"):
            raise ValueError(f"unknown gate source {cfg.gate_source!r}")
        torch.manual_seed(seed)
        d, T = cfg.dim, cfg.num_step
        self.cfg = cfg
        self.n_relations = n_relations
        self.V_R = nn.Parameter(torch.randn(n_relations, d) * (1.0 / math.sqrt(d)))
        self.W_r = nn.Parameter(torch.ones(d))
        self.msg_fwd = nn.Linear(d, d)
        self.msg_bwd = nn.Linear(d, d)
        self.history = nn.Linear(2 * d, d)
        self.fuse = nn.Linear(2 * d, d)
        self.rel_update = nn.Linear(2 * n_relations, n_relations)
        self.cand_out = nn.ModuleList(nn.Linear(d, 1) for _ in range(T))
        self.rel_out = nn.ModuleList(nn.Linear(n_relations, n_relations) for _ in range(T))
        if cfg.variant == "transformer":
            self.interaction = SelfAttentionBlock(d, cfg.heads)
        elif cfg.variant == "linear":
            self.interaction = LinearInteraction(d)
        else:
            self.interaction = RecurrentInteraction(d)

    def candidates(self, batch: Batch, P: torch.Tensor) -> torch.Tensor:
        return init_candidates(batch.W_C, P, self.V_R)

    def aggregate(self, s: torch.Tensor, p_prev: torch.Tensor, batch: Batch) -> torch.Tensor:
        """Instruction-matched relation messages weighted by the previous answer distribution."""
        B, N = batch.shape
        d = self.V_R.shape[1]
        agg = torch.zeros(B * N, d, dtype=s.dtype)
        if batch.edge_rel.numel():
            match = s[batch.edge_batch] * self.V_R[batch.edge_rel]
            p_flat = p_prev.reshape(-1)
            fwd = torch.relu(self.msg_fwd(match)) * p_flat[batch.edge_head].unsqueeze(-1)
            bwd = torch.relu(self.msg_bwd(match)) * p_flat[batch.edge_tail].unsqueeze(-1)
            agg = agg.index_add(0, batch.edge_tail, fwd).index_add(0, batch.edge_head, bwd)
        return agg.view(B, N, d)

    def step(self, t: int, s: torch.Tensor, V_prev: torch.Tensor, p_prev: torch.Tensor, S_prev: torch.Tensor,
             V_C0: torch.Tensor, batch: Batch) -> StepOutput:
        mask = batch.cand_mask
        agg = self.aggregate(s, p_prev, batch)
        hist = torch.relu(self.history(torch.cat([V_prev, agg], dim=-1)))
        gate_base = V_C0 if self.cfg.gate_source == "initial" else V_prev
        gated = s.unsqueeze(1) * self.W_r * gate_base
        fused = self.fuse(torch.cat([hist, gated], dim=-1))
        V_t = self.interaction(fused, mask)
        scores = self.cand_out[t](V_t).squeeze(-1).masked_fill(~mask, float("-inf"))
        p_c = torch.softmax(scores, dim=-1)
        S_R = self.rel_update(torch.cat([s @ self.V_R.T, S_prev], dim=-1))
        p_r = torch.softmax(self.rel_out[t](S_R), dim=-1)
        return StepOutput(V_t, S_R, p_c, p_r)

    def forward(self, instructions: list[torch.Tensor], batch: Batch, P: torch.Tensor) -> list[StepOutput]:
        """Run all steps given the per-step instruction vectors (each (B, d))."""
        V_C0 = self.candidates(batch, P)
        V, p, S = V_C0, batch.p0, batch.S_R0
        outs = []
        for t, s in enumerate(instructions):
            out = self.step(t, s, V, p, S, V_C0, batch)
            outs.append(out)
            V, p, S = out.V_c, out.p_c, out.S_R
        return outs


def predict(out: StepOutput):
    """Final answer and relation distributions."""
    if out.p_c.shape[-1] == 0:
        raise ValueError("empty candidate set")
    return out.p_c, out.p_r


def kl_divergence(gold, pred, eps: float = KL_EPS):
    """KL(gold || pred) along the last axis with additive smoothing."""
    if isinstance(gold, torch.Tensor):
        terms = gold * (torch.log(gold + eps) - torch.log(pred + eps))
        return terms.sum(-1)
    gold = np.asarray(gold, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    return float(np.sum(gold * (np.log(gold + eps) - np.log(pred + eps))))


@dataclass
class LossBreakdown:
    total: float
    answer: float
    relation: float
    skipped_answer: bool = False


def compute_loss(p_c, p_r, gold_c, gold_r, lam: float) -> LossBreakdown:
    """Fused objective lam * L_c + (1 - lam) * L_r for one example."""
    if not 0.0 < lam <= 1.0:
        raise ValueError("lambda must lie in (0, 1]")
    gold_c = np.asarray(gold_c, dtype=np.float64)
    skipped = gold_c.sum() == 0
    l_c = 0.0 if skipped else kl_divergence(gold_c, p_c)
    l_r = kl_divergence(gold_r, p_r)
    return LossBreakdown(lam * l_c + (1.0 - lam) * l_r, l_c, l_r, bool(skipped))


def gold_answer_distribution(subgraph: Subgraph, answers) -> np.ndarray:
    """Uniform indicator over gold answers present among candidates (all zero if none)."""
    g = np.zeros(subgraph.n_candidates)
    hits = [subgraph.local[a] for a in answers if a in subgraph.local]
    if hits:
        g[hits] = 1.0 / len(hits)
    return g


def gold_relation_distribution(subgraph: Subgraph, answers, n_relations: int) -> tuple[np.ndarray, bool]:
    """Soft relation labels around the gold answers.

    Returns (distribution, usable); unusable examples fall back to a uniform
    distribution and are excluded from the relation loss.
    """
    present = [a for a in answers if a in subgraph.local]
    dist = incident_relation_distribution(subgraph, present, n_relations) if present else None
    if dist is None:
        return uniform_over(subgraph.relation_ids, n_relations), False
    return dist, True


def batched_loss(outs: list[StepOutput], batch: Batch, lam: float, per_step: bool = False):
    """Mean fused loss over a batch; returns (total tensor, L_c float, L_r float)."""
    steps = outs if per_step else outs[-1:]
    total = 0.0
    lc_sum = lr_sum = 0.0
    for out in steps:
        l_c = kl_divergence(batch.gold_c, out.p_c)
        l_r = kl_divergence(batch.gold_r, out.p_r)
        n_c = batch.has_c.sum().clamp(min=1)
        n_r = batch.has_r.sum().clamp(min=1)
        L_c = (l_c * batch.has_c).sum() / n_c
        L_r = (l_r * batch.has_r).sum() / n_r
        total = total + lam * L_c + (1.0 - lam) * L_r
        lc_sum += L_c.item()
        lr_sum += L_r.item()
    k = len(steps)
    return total / k, lc_sum / k, lr_sum / k

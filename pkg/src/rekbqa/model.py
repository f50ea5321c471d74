"""End-to-end network: question encoder + instruction steps + reasoner."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .encoder import EmbeddingTable, InstructionModule, QuestionEncoder
from .kb import KnowledgeBase, QAExample, Subgraph, surrounding_relation_matrix
from .reasoner import (Batch, Reasoner, ReasonerConfig, StepOutput, gold_answer_distribution,
                       gold_relation_distribution)
from .retrieval import init_relation_state


@dataclass
class Prepared:
    """Tensor-ready view of one question and its subgraph."""

    qid: str
    token_ids: list[int]
    candidates: list[int]
    W_C: np.ndarray
    edges: np.ndarray  # (E, 3) local head, relation, local tail
    topics_local: list[int]
    S_R0: np.ndarray
    gold_c: np.ndarray
    gold_r: np.ndarray
    has_c: bool
    has_r: bool
    answers: set[int]


def prepare_example(ex: QAExample, kb: KnowledgeBase, table: EmbeddingTable) -> Prepared:
    sg: Subgraph = ex.subgraph
    n_r = kb.n_relations
    gold_c = gold_answer_distribution(sg, ex.answers)
    gold_r, has_r = gold_relation_distribution(sg, ex.answers, n_r)
    tokens = ex.question or ["<oov>"]
    return Prepared(
        qid=ex.qid,
        token_ids=table.ids(tokens),
        candidates=list(sg.candidates),
        W_C=surrounding_relation_matrix(sg, n_r),
        edges=sg.local_edges(),
        topics_local=[sg.local[t] for t in sg.topic_entities],
        S_R0=init_relation_state(sg, sg.topic_entities, n_r),
        gold_c=gold_c,
        gold_r=gold_r,
        has_c=bool(gold_c.sum() > 0),
        has_r=has_r,
        answers=set(ex.answers),
    )


def collate(items: Sequence[Prepared], dtype=torch.float32):
    """Pad a list of prepared questions into (token ids, lengths, Batch)."""
    B = len(items)
    N = max(len(it.candidates) for it in items)
    L = max(len(it.token_ids) for it in items)
    n_r = items[0].W_C.shape[1]
    tokens = torch.zeros(B, L, dtype=torch.long)
    lengths = torch.tensor([len(it.token_ids) for it in items], dtype=torch.long)
    W_C = np.zeros((B, N, n_r))
    mask = np.zeros((B, N), dtype=bool)
    p0 = np.zeros((B, N))
    gold_c = np.zeros((B, N))
    heads, rels, tails, owners = [], [], [], []
    for b, it in enumerate(items):
        n = len(it.candidates)
        tokens[b, : len(it.token_ids)] = torch.tensor(it.token_ids)
        W_C[b, :n] = it.W_C
        mask[b, :n] = True
        p0[b, it.topics_local] = 1.0 / len(it.topics_local)
        gold_c[b, :n] = it.gold_c
        if len(it.edges):
            heads.append(it.edges[:, 0] + b * N)
            rels.append(it.edges[:, 1])
            tails.append(it.edges[:, 2] + b * N)
            owners.append(np.full(len(it.edges), b))
    cat = lambda xs: torch.as_tensor(np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64), dtype=torch.long)
    t = lambda a: torch.as_tensor(a, dtype=dtype)
    batch = Batch(
        W_C=t(W_C), cand_mask=torch.as_tensor(mask), p0=t(p0),
        S_R0=t(np.stack([it.S_R0 for it in items])),
        edge_head=cat(heads), edge_rel=cat(rels), edge_tail=cat(tails), edge_batch=cat(owners),
        gold_c=t(gold_c), gold_r=t(np.stack([it.gold_r for it in items])),
        has_c=torch.tensor([it.has_c for it in items]).to(dtype),
        has_r=torch.tensor([it.has_r for it in items]).to(dtype),
    )
    return tokens, lengths, batch


class KBQAModel(nn.Module):
    def __init__(self, table: EmbeddingTable, n_relations: int, cfg: ReasonerConfig, score: str = "bilinear",
                 seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.cfg = cfg
        self.table = table
        self.encoder = QuestionEncoder(table.word_dim, cfg.dim)
        self.instruction = InstructionModule(cfg.dim, score=score, seed=seed)
        self.reasoner = Reasoner(n_relations, cfg, seed=seed)
        self.drop = nn.Dropout(cfg.dropout)

    def instructions(self, tokens: torch.Tensor, lengths: torch.Tensor) -> list[torch.Tensor]:
        emb = self.drop(self.table(tokens))
        h_last, token_states = self.encoder(emb, lengths)
        tok_mask = torch.arange(tokens.shape[1])[None, :] < lengths[:, None]
        s = self.instruction.initial(tokens.shape[0], dtype=h_last.dtype)
        out = []
        for _ in range(self.cfg.num_step):
            s, _ = self.instruction(s, h_last, token_states, tok_mask)
            out.append(s)
        return out

    def forward(self, tokens, lengths, batch: Batch, P: torch.Tensor) -> list[StepOutput]:
        return self.reasoner(self.instructions(tokens, lengths), batch, P)

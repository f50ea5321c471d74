"""Question embedding, LSTM encoding and per-step instruction vectors."""
from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

TOKEN_RE = re.compile(r"[a-z0-9_]+")

OOV = "<oov>"
PAD = "<pad>"


def tokenize(text: str) -> list[str]:
    return TOKEN_RE.findall(text.lower())


class EmbeddingTable(nn.Module):
    """Word vectors with a frozen all-zero OOV row.

    Index 0 is padding and index 1 the OOV token; both stay zero.
    """

    def __init__(self, tokens: Iterable[str], word_dim: int = 300, vectors: np.ndarray | None = None,
                 trainable: bool = True, seed: int = 0, dtype=torch.float32):
        super().__init__()
        self.vocab: dict[str, int] = {PAD: 0, OOV: 1}
        for tok in tokens:
            if tok not in self.vocab:
                self.vocab[tok] = len(self.vocab)
        self.word_dim = word_dim
        n = len(self.vocab)
        if vectors is None:
            gen = torch.Generator().manual_seed(seed)
            weight = torch.randn(n, word_dim, generator=gen, dtype=dtype) * 0.1
        else:
            if vectors.shape != (n - 2, word_dim):
                raise ValueError(f"expected vectors of shape {(n - 2, word_dim)}, got {vectors.shape}")
            weight = torch.cat([torch.zeros(2, word_dim, dtype=dtype), torch.as_tensor(vectors, dtype=dtype)])
        weight[:2] = 0.0
        self.weight = nn.Parameter(weight, requires_grad=trainable)
        mask = torch.ones(n, 1, dtype=dtype)
        mask[:2] = 0.0
        self.register_buffer("keep", mask)

    @classmethod
    def from_text_file(cls, path: str | Path, word_dim: int = 300, trainable: bool = False) -> "EmbeddingTable":
        """Load ``token v1 ... vD`` lines; malformed lengths raise."""
        tokens, rows = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.rstrip().split(" ")
                if len(parts) < 2:
                    continue
                if len(parts) != word_dim + 1:
                    raise ValueError(f"{path}:{lineno}: expected {word_dim} values, got {len(parts) - 1}")
                tokens.append(parts[0])
                rows.append([float(x) for x in parts[1:]])
        return cls(tokens, word_dim, np.asarray(rows), trainable=trainable)

    def ids(self, tokens: Sequence[str]) -> list[int]:
        return [self.vocab.get(t, 1) for t in tokens]

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        return F.embedding(ids, self.weight * self.keep)


def embed_question(tokens: Sequence[str], table: EmbeddingTable) -> torch.Tensor:
    if not tokens:
        raise ValueError("cannot embed an empty token list")
    return table(torch.tensor(table.ids(tokens), dtype=torch.long))


class QuestionEncoder(nn.Module):
    """LSTM over word vectors, hidden states projected to the entity dimension."""

    def __init__(self, word_dim: int, dim: int, hidden: int | None = None):
        super().__init__()
        hidden = hidden or dim
        self.lstm = nn.LSTM(word_dim, hidden, batch_first=True)
        self.proj = nn.Linear(hidden, dim)

    def forward(self, embedded: torch.Tensor, lengths: torch.Tensor | None = None):
        """``embedded``: (B, n, word_dim) or (n, word_dim).

        Returns (h_last (B, d), token_states (B, n, d)); padded positions of
        token_states are zero.
        """
        single = embedded.dim() == 2
        if single:
            embedded = embedded.unsqueeze(0)
        B, n, _ = embedded.shape
        if lengths is None:
            lengths = torch.full((B,), n, dtype=torch.long)
        packed = pack_padded_sequence(embedded, lengths.cpu(), batch_first=True, enforce_sorted=False)
        out, (h_n, _) = self.lstm(packed)
        out, _ = pad_packed_sequence(out, batch_first=True, total_length=n)
        mask = (torch.arange(n)[None, :] < lengths[:, None]).to(embedded.dtype).unsqueeze(-1)
        token_states = self.proj(out) * mask
        h_last = self.proj(h_n[-1])
        if single:
            return h_last[0], token_states[0]
        return h_last, token_states


class InstructionModule(nn.Module):
    """Produces the semantic vector for each reasoning step.

    The query for step t is an MLP over [s^(t-1); h_last]; token states are
    scored against it (bilinear or dot), softmax-normalised, and averaged.
    """

    def __init__(self, dim: int, score: str = "bilinear", seed: int = 0):
        super().__init__()
        if score not in ("bilinear", "dot"):
            raise ValueError(f"unknown score function {score!r}")
        self.score_kind = score
        self.query = nn.Sequential(nn.Linear(2 * dim, dim), nn.Tanh(), nn.Linear(dim, dim))
        self.bilinear = nn.Linear(dim, dim, bias=False) if score == "bilinear" else None
        gen = torch.Generator().manual_seed(seed)
        self.register_buffer("s0", torch.randn(dim, generator=gen) * 0.02)

    def initial(self, batch: int | None = None, dtype=None) -> torch.Tensor:
        s0 = self.s0 if dtype is None else self.s0.to(dtype)
        return s0 if batch is None else s0.expand(batch, -1)

    def attention(self, q: torch.Tensor, token_states: torch.Tensor, mask: torch.Tensor | None = None):
        keys = self.bilinear(token_states) if self.bilinear is not None else token_states
        scores = (keys * q.unsqueeze(-2)).sum(-1)
        if mask is not None:
            scores = scores.masked_fill(~mask, float("-inf"))
        return torch.softmax(scores, dim=-1)

    def forward(self, s_prev: torch.Tensor, h_last: torch.Tensor, token_states: torch.Tensor,
                mask: torch.Tensor | None = None):
        """One step; works batched (B, .) or unbatched. Returns (s_t, attention)."""
        q = self.query(torch.cat([s_prev, h_last], dim=-1))
        attn = self.attention(q, token_states, mask)
        s = (attn.unsqueeze(-1) * token_states).sum(-2)
        return s, attn


def instruction_step(s_prev: torch.Tensor, step: int, h_last, token_states, module: InstructionModule,
                     num_step: int):
    if step >= num_step:
        raise ValueError(f"step {step} already reached num_step={num_step}")
    s, attn = module(s_prev, h_last, token_states)
    return s, step + 1, attn

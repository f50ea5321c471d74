"""Mini-batch training and inference for the full network."""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .encoder import EmbeddingTable
from .kb import KnowledgeBase, QAExample
from .metrics import EvalReport, evaluate
from .model import KBQAModel, Prepared, collate, prepare_example
from .reasoner import ReasonerConfig, batched_loss
from .vgae import TrainingDiverged

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 8e-4
    batch_size: int = 40
    epochs: int = 200
    eps: float = 0.95  # fraction of the learning rate removed by the end of training
    lam: float = 0.5
    per_step_loss: bool = False
    grad_clip: float = 1.0
    rho: float = 0.5
    score: str = "bilinear"
    word_dim: int = 300
    reasoner: ReasonerConfig = field(default_factory=ReasonerConfig)


@dataclass
class TrainResult:
    model: KBQAModel
    history: list[dict]
    best_epoch: int
    best_valid_hits: float


def build_vocabulary(examples: Sequence[QAExample]) -> list[str]:
    return sorted({tok for ex in examples for tok in ex.question})


def prepare_all(examples: Sequence[QAExample], kb: KnowledgeBase, table: EmbeddingTable) -> list[Prepared]:
    return [prepare_example(ex, kb, table) for ex in examples]


def batches(items: Sequence[Prepared], size: int, order=None):
    idx = list(range(len(items))) if order is None else list(order)
    for start in range(0, len(idx), size):
        yield [items[i] for i in idx[start:start + size]]


@torch.no_grad()
def predict_all(model: KBQAModel, items: Sequence[Prepared], P: torch.Tensor, batch_size: int = 64):
    """qid -> (candidate entity ids, confidences) ordered by descending confidence."""
    model.eval()
    out = {}
    for chunk in batches(items, batch_size):
        tokens, lengths, batch = collate(chunk, dtype=P.dtype)
        p_c = model(tokens, lengths, batch, P)[-1].p_c.double().numpy()
        for b, it in enumerate(chunk):
            conf = p_c[b, : len(it.candidates)]
            order = sorted(range(len(conf)), key=lambda i: (-conf[i], i))
            out[it.qid] = ([it.candidates[i] for i in order], [float(conf[i]) for i in order])
    return out


def evaluate_model(model, items, P, rho=0.5) -> EvalReport:
    preds = predict_all(model, items, P)
    return evaluate(preds, {it.qid: it.answers for it in items}, rho=rho)


def train(model: KBQAModel, train_items: Sequence[Prepared], valid_items: Sequence[Prepared], P: np.ndarray,
          cfg: TrainConfig, seed: int = 0, dtype=torch.float32) -> TrainResult:
    torch.manual_seed(seed)
    P_t = torch.as_tensor(P, dtype=dtype)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=cfg.lr)
    steps_per_epoch = max(1, -(-len(train_items) // cfg.batch_size))
    total_steps = steps_per_epoch * cfg.epochs
    sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda k: 1.0 - cfg.eps * min(k, total_steps) / total_steps)
    gen = torch.Generator().manual_seed(seed)
    history: list[dict] = []
    best_state, best_epoch, best_hits = copy.deepcopy(model.state_dict()), -1, -1.0
    for epoch in range(cfg.epochs):
        model.train()
        order = torch.randperm(len(train_items), generator=gen).tolist()
        loss_sum = lc_sum = lr_sum = 0.0
        n_batches = 0
        for bi, chunk in enumerate(batches(train_items, cfg.batch_size, order)):
            tokens, lengths, batch = collate(chunk, dtype=dtype)
            outs = model(tokens, lengths, batch, P_t)
            loss, l_c, l_r = batched_loss(outs, batch, cfg.lam, cfg.per_step_loss)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} batch {bi} (lr={sched.get_last_lr()[0]:.2e}, "
                    f"questions {[it.qid for it in chunk][:5]})")
            opt.zero_grad()
            loss.backward()
            if cfg.grad_clip:
                torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
            opt.step()
            sched.step()
            loss_sum += loss.item()
            lc_sum += l_c
            lr_sum += l_r
            n_batches += 1
        record = {"epoch": epoch + 1, "loss": loss_sum / n_batches, "loss_answer": lc_sum / n_batches,
                  "loss_relation": lr_sum / n_batches}
        if valid_items:
            rep = evaluate_model(model, valid_items, P_t, cfg.rho)
            record.update(valid_hits_at_1=rep.hits_at_1, valid_f1=rep.f1)
            if rep.hits_at_1 >= best_hits:
                best_hits, best_epoch = rep.hits_at_1, epoch + 1
                best_state = copy.deepcopy(model.state_dict())
        history.append(record)
        log.info("epoch %d loss %.4f valid hits@1 %s", epoch + 1, record["loss"], record.get("valid_hits_at_1"))
    if valid_items:
        model.load_state_dict(best_state)
    else:
        best_epoch = cfg.epochs
    return TrainResult(model, history, best_epoch, best_hits)

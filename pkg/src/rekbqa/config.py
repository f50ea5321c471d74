"""Flat ``key = value`` experiment configuration.

Every field has a default; where the reference hyper-parameter table lists
a value (learning rate, batch size, dropout, reasoning steps, entity and
word dimensions, candidate cap) the default is that value.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .reasoner import ReasonerConfig
from .retrieval import RetrievalConfig
from .serr import RerankConfig
from .synthetic import SyntheticSpec
from .training import TrainConfig
from .vgae import VGAEConfig

_SECTION = "experiment"


@dataclass
class ExperimentConfig:
    seed: int = 0
    # data; an empty kb path means "generate the synthetic benchmark"
    kb: str = ""
    train_data: str = ""
    valid_data: str = ""
    test_data: str = ""
    synthetic_entities: int = 200
    synthetic_relations: int = 20
    synthetic_questions: int = 500
    synthetic_two_hop_share: float = 0.5
    synthetic_seed: int = 0
    # retrieval
    max_hops: int = 3
    max_candidates: int = 2000
    ppr_alpha: float = 0.15
    ppr_epsilon: float = 1e-4
    # relation auto-encoder
    tau: float = 2000
    vgae_hidden: int = 64
    vgae_latent: int = 32
    vgae_epochs: int = 200
    vgae_lr: float = 0.01
    vgae_compound: str = "sample"
    # question encoder
    word_dim: int = 300
    word_vectors: str = ""
    score: str = "bilinear"
    # reasoner
    entity_dim: int = 50
    num_step: int = 3
    variant: str = "transformer"
    heads: int = 2
    dropout: float = 0.30
    gate_source: str = "initial"
    # optimisation
    lr: float = 8e-4
    batch_size: int = 40
    epochs: int = 200
    eps: float = 0.95
    lam: float = 0.5
    per_step_loss: bool = False
    grad_clip: float = 1.0
    # re-ranking and evaluation
    h1: float = 1.5
    h2: float = 1.2
    min_stem_matches: int = 1
    stopwords: str = ""
    rho: float = 0.5
    # ablations
    uniform_ppr: bool = False
    use_serr: bool = True

    def retrieval(self) -> RetrievalConfig:
        return RetrievalConfig(self.max_hops, self.max_candidates, self.ppr_alpha, self.ppr_epsilon)

    def vgae(self) -> VGAEConfig:
        return VGAEConfig(self.vgae_hidden, self.vgae_latent, self.vgae_epochs, self.vgae_lr, self.vgae_compound)

    def reasoner(self) -> ReasonerConfig:
        return ReasonerConfig(self.entity_dim, self.num_step, self.variant, self.heads, self.dropout,
                              self.gate_source)

    def training(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, batch_size=self.batch_size, epochs=self.epochs, eps=self.eps, lam=self.lam,
                           per_step_loss=self.per_step_loss, grad_clip=self.grad_clip, rho=self.rho,
                           score=self.score, word_dim=self.word_dim, reasoner=self.reasoner())

    def rerank(self) -> RerankConfig:
        return RerankConfig(self.h1, self.h2, self.min_stem_matches)

    def synthetic(self) -> SyntheticSpec:
        two = self.synthetic_two_hop_share
        weights = {h: w for h, w in ((1, 1.0 - two), (2, two)) if w > 0}
        return SyntheticSpec(self.synthetic_entities, self.synthetic_relations, self.synthetic_questions, weights)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def _coerce(kind, raw: str):
    raw = raw.strip()
    if kind in (bool, "bool"):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` comments allowed) over ``base``."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string(f"[{_SECTION}]\n" + text)
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    changes = {}
    for key, raw in parser[_SECTION].items():
        if key not in known:
            raise KeyError(f"unknown config key {key!r}")
        changes[key] = _coerce(known[key], raw)
    return dataclasses.replace(base or ExperimentConfig(), **changes)


def load_config(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), base)


SYNTHETIC_OVERRIDES = {"lr": 5e-3, "epochs": 50}


def synthetic_config(**changes) -> ExperimentConfig:
    """Desk-scale profile: the synthetic benchmark with a short, faster schedule."""
    return ExperimentConfig(**{**SYNTHETIC_OVERRIDES, **changes})

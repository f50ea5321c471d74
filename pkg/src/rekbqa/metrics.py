"""Hits@1 and set-based F1 over ranked candidate predictions."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence


@dataclass
class QuestionRecord:
    qid: str
    gold: list
    predicted: list
    hit: bool
    f1: float | None
    best_gold_rank: int | None


@dataclass
class EvalReport:
    hits_at_1: float
    f1: float
    n_questions: int
    n_f1: int
    records: list[QuestionRecord] = field(default_factory=list)

    def summary(self) -> dict:
        return {"hits_at_1": self.hits_at_1, "f1": self.f1, "n_questions": self.n_questions, "n_f1": self.n_f1}

    def to_dict(self) -> dict:
        out = self.summary()
        out["records"] = [asdict(r) for r in self.records]
        return out


def answer_set(candidates: Sequence, confidences: Sequence[float], rho: float = 0.5) -> list:
    """Candidates whose confidence is at least ``rho`` times the maximum."""
    if not candidates:
        return []
    top = max(confidences)
    return [c for c, p in zip(candidates, confidences) if p >= rho * top]


def set_f1(predicted, gold) -> float:
    predicted, gold = set(predicted), set(gold)
    tp = len(predicted & gold)
    if tp == 0:
        return 0.0
    precision = tp / len(predicted)
    recall = tp / len(gold)
    return 2 * precision * recall / (precision + recall)


def evaluate(predictions: Mapping[str, tuple[Sequence, Sequence[float]]], gold_sets: Mapping[str, set],
             rho: float = 0.5) -> EvalReport:
    """``predictions``: qid -> (candidates, confidences), in any order.

    Questions with an empty gold set are excluded from F1 and count as a
    miss for Hits@1.
    """
    if set(predictions) != set(gold_sets):
        missing = sorted(set(gold_sets) ^ set(predictions))[:5]
        raise KeyError(f"prediction/gold question ids differ, e.g. {missing}")
    records = []
    hits = 0
    f1_sum, n_f1 = 0.0, 0
    for qid in sorted(predictions):
        cands, conf = predictions[qid]
        ranked = [c for _, c in sorted(zip(range(len(cands)), cands), key=lambda x: (-conf[x[0]], x[0]))]
        gold = gold_sets[qid]
        hit = bool(ranked) and ranked[0] in gold
        hits += hit
        pred_set = answer_set(list(cands), list(conf), rho)
        f1 = None
        if gold:
            f1 = set_f1(pred_set, gold)
            f1_sum += f1
            n_f1 += 1
        best = next((i + 1 for i, c in enumerate(ranked) if c in gold), None)
        records.append(QuestionRecord(qid, sorted(gold, key=str), sorted(pred_set, key=str), hit, f1, best))
    n = len(records)
    return EvalReport(hits / n if n else 0.0, f1_sum / n_f1 if n_f1 else 0.0, n, n_f1, records)

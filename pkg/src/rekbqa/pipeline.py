"""Experiment stages over an artifacts directory.

Stages communicate only through files so each can be rerun from the CLI:

    prepare      -> subgraphs.jsonl (and data/ for the synthetic benchmark)
    train-vgae   -> ppr.bin, ppr.json, vgae_loss.jsonl, vgae_loss.png
    train        -> model.ckpt, metrics.jsonl, training.png
    eval         -> predictions.jsonl, eval.json
    rerank       -> predictions_serr.jsonl, eval_serr.json
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import io as rio
from . import plotting
from .config import ExperimentConfig
from .encoder import EmbeddingTable, tokenize
from .kb import KnowledgeBase, QAExample, Subgraph, load_kb
from .metrics import EvalReport, evaluate
from .model import KBQAModel
from .retrieval import retrieve_subgraph, undirected_adjacency
from .serr import DEFAULT_STOPWORDS, RelationTrie, build_relation_trie, load_stopwords, rerank
from .synthetic import write_synthetic
from .training import build_vocabulary, predict_all, prepare_all, train
from .vgae import build_relation_graph, compute_ppr, embeddings, train_qa_vgae

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


class AlreadyReranked(ValueError):
    pass


def _setup(cfg: ExperimentConfig):
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)
    torch.manual_seed(cfg.seed)


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def kb_path(cfg: ExperimentConfig, out: Path) -> Path:
    return Path(cfg.kb) if cfg.kb else out / "data" / "kb.tsv"


def split_paths(cfg: ExperimentConfig, out: Path) -> dict[str, Path]:
    given = {"train": cfg.train_data, "valid": cfg.valid_data, "test": cfg.test_data}
    if cfg.kb:
        return {k: Path(v) for k, v in given.items() if v}
    return {k: out / "data" / f"{k}.jsonl" for k in SPLITS}


def stage_prepare(cfg: ExperimentConfig, out: Path) -> Path:
    """Materialise per-question subgraphs so training never reruns retrieval."""
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.cfg")
    if not cfg.kb:
        write_synthetic(out / "data", cfg.synthetic(), seed=cfg.synthetic_seed)
    kb = load_kb(kb_path(cfg, out))
    adj = undirected_adjacency(kb)
    rcfg = cfg.retrieval()
    records = []
    for split, path in split_paths(cfg, out).items():
        for i, row in enumerate(rio.read_jsonl(path)):
            topics = kb.entity_ids(row["topics"])
            sg = retrieve_subgraph(kb, topics, rcfg, adj)
            records.append({
                "id": row.get("id", f"{split}-{i}"), "split": split, "question": row["question"],
                "topics": row["topics"], "answers": row.get("answers", []),
                "candidates": [kb.entities.name(e) for e in sg.candidates],
            })
    target = out / "subgraphs.jsonl"
    rio.write_jsonl(target, records)
    return target


def load_prepared(cfg: ExperimentConfig, out: Path) -> tuple[KnowledgeBase, dict[str, list[QAExample]]]:
    kb = load_kb(kb_path(cfg, out))
    data: dict[str, list[QAExample]] = {s: [] for s in SPLITS}
    for rec in rio.read_jsonl(out / "subgraphs.jsonl"):
        topics = kb.entity_ids(rec["topics"])
        sg = Subgraph.induced(kb, kb.entity_ids(rec["candidates"]), topics)
        answers = {kb.entities[a] for a in rec["answers"] if a in kb.entities}
        data.setdefault(rec["split"], []).append(
            QAExample(rec["id"], tokenize(rec["question"]), topics, answers, sg, rec["question"], rec["split"]))
    return kb, data


def stage_train_vgae(cfg: ExperimentConfig, out: Path) -> np.ndarray:
    _setup(cfg)
    kb = load_kb(kb_path(cfg, out))
    graph = build_relation_graph(kb, cfg.tau)
    result = train_qa_vgae(graph, cfg.vgae(), seed=cfg.seed)
    P = compute_ppr(result.model, graph)
    rio.write_ppr(out / "ppr.bin", P)
    rio.write_ppr_json(out / "ppr.json", P, kb.relations.items)
    rio.write_jsonl(out / "vgae_loss.jsonl", ({"epoch": i + 1, "loss": l} for i, l in enumerate(result.losses)))
    rio.export_embeddings(out / "vgae_embeddings.txt", kb.relations.items, embeddings(result.model, graph))
    plotting.plot_vgae_loss(result.losses, out / "vgae_loss.png")
    return P


def load_ppr(cfg: ExperimentConfig, out: Path) -> np.ndarray:
    P = rio.read_ppr(out / "ppr.bin")
    if cfg.uniform_ppr:
        P = np.full_like(P, 1.0 / P.shape[0])
    return P


def _table(cfg: ExperimentConfig, tokens: list[str]) -> EmbeddingTable:
    if cfg.word_vectors:
        return EmbeddingTable.from_text_file(cfg.word_vectors, cfg.word_dim)
    return EmbeddingTable(tokens, cfg.word_dim, seed=cfg.seed)


def stage_train(cfg: ExperimentConfig, out: Path, checkpoint: str = "model.ckpt", metrics: str = "metrics.jsonl"):
    _setup(cfg)
    kb, data = load_prepared(cfg, out)
    P = load_ppr(cfg, out)
    table = _table(cfg, build_vocabulary(data["train"]))
    tcfg = cfg.training()
    model = KBQAModel(table, kb.n_relations, tcfg.reasoner, score=cfg.score, seed=cfg.seed)
    items = {s: prepare_all(data[s], kb, table) for s in ("train", "valid")}
    result = train(model, items["train"], items["valid"], P, tcfg, seed=cfg.seed)
    vocab = sorted(table.vocab, key=table.vocab.get)
    rio.save_checkpoint(out / checkpoint, model.state_dict(), {
        "config": cfg.dumps(), "vocab": vocab, "vocab_sha256": rio.vocab_hash(vocab),
        "relations_sha256": rio.vocab_hash(kb.relations.items), "n_relations": kb.n_relations,
        "best_epoch": result.best_epoch,
    })
    rio.write_jsonl(out / metrics, result.history)
    plotting.plot_training(result.history, out / Path(metrics).with_suffix(".png").name.replace("metrics", "training"))
    return result


def load_model(cfg: ExperimentConfig, out: Path, checkpoint: str = "model.ckpt") -> KBQAModel:
    state, meta = rio.load_checkpoint(out / checkpoint)
    kb = load_kb(kb_path(cfg, out))
    if meta["relations_sha256"] != rio.vocab_hash(kb.relations.items):
        raise rio.FormatError("checkpoint was trained on a different relation vocabulary")
    vocab = meta["vocab"]
    table = EmbeddingTable(vocab[2:], cfg.word_dim, seed=cfg.seed)
    model = KBQAModel(table, meta["n_relations"], cfg.reasoner(), score=cfg.score, seed=cfg.seed)
    model.load_state_dict(state)
    return model


def prediction_records(preds, examples: list[QAExample], kb: KnowledgeBase) -> list[dict]:
    by_id = {ex.qid: ex for ex in examples}
    records = []
    for qid in sorted(preds):
        cands, conf = preds[qid]
        ex = by_id[qid]
        records.append({
            "id": qid, "question": ex.text, "topics": [kb.entities.name(t) for t in ex.topic_entities],
            "candidates": [kb.entities.name(c) for c in cands], "confidences": conf, "serr_applied": False,
        })
    return records


def evaluate_records(records: list[dict], examples: list[QAExample], kb: KnowledgeBase, rho: float) -> EvalReport:
    preds = {r["id"]: (r["candidates"], r["confidences"]) for r in records}
    gold = {ex.qid: {kb.entities.name(a) for a in ex.answers} for ex in examples}
    return evaluate(preds, gold, rho)


def stage_eval(cfg: ExperimentConfig, out: Path, split: str = "test", checkpoint: str = "model.ckpt",
               predictions: str = "predictions.jsonl", report: str = "eval.json") -> EvalReport:
    _setup(cfg)
    kb, data = load_prepared(cfg, out)
    model = load_model(cfg, out, checkpoint)
    P = torch.as_tensor(load_ppr(cfg, out), dtype=torch.float32)
    items = prepare_all(data[split], kb, model.table)
    records = prediction_records(predict_all(model, items, P), data[split], kb)
    rio.write_jsonl(out / predictions, records)
    rep = evaluate_records(records, data[split], kb, cfg.rho)
    _dump(out / report, rep.to_dict())
    return rep


def rerank_record(record: dict, kb: KnowledgeBase, subgraph: Subgraph, trie: RelationTrie, cfg: ExperimentConfig,
                  stopwords=DEFAULT_STOPWORDS) -> dict:
    """Apply stem-extraction re-ranking once to a prediction record."""
    if record.get("serr_applied"):
        raise AlreadyReranked(f"prediction {record['id']} was already re-ranked")
    cands = kb.entity_ids(record["candidates"])
    topics = kb.entity_ids(record["topics"])
    res = rerank(record["question"], cands, record["confidences"], subgraph, trie, cfg.rerank(), stopwords, topics)
    new = dict(record)
    new["candidates"] = [kb.entities.name(c) for c in res.candidates]
    new["confidences"] = res.confidences
    new["serr_applied"] = True
    new["boosts"] = [{"candidate": kb.entities.name(b.candidate), "factor": b.factor, "kind": b.kind,
                      "relations": [kb.relations.name(r) for r in b.relations]} for b in res.boosts]
    return new


def stage_rerank(cfg: ExperimentConfig, out: Path, split: str = "test", predictions: str = "predictions.jsonl",
                 reranked: str = "predictions_serr.jsonl", report: str = "eval_serr.json") -> EvalReport:
    kb, data = load_prepared(cfg, out)
    trie = build_relation_trie(kb.relations.items)
    stopwords = load_stopwords(cfg.stopwords) if cfg.stopwords else DEFAULT_STOPWORDS
    subgraphs = {ex.qid: ex.subgraph for ex in data[split]}
    records = [rerank_record(r, kb, subgraphs[r["id"]], trie, cfg, stopwords)
               for r in rio.read_jsonl(out / predictions)]
    rio.write_jsonl(out / reranked, records)
    rep = evaluate_records(records, data[split], kb, cfg.rho)
    _dump(out / report, rep.to_dict())
    return rep


def _run(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(stage, exc) from exc


def run_experiment(cfg: ExperimentConfig, out: str | Path, label: str = "full") -> dict:
    """prepare -> train-vgae -> train -> eval -> rerank -> eval; returns the summary row."""
    out = Path(out)
    _run("prepare", stage_prepare, cfg, out)
    _run("train-vgae", stage_train_vgae, cfg, out)
    _run("train", stage_train, cfg, out)
    before = _run("eval", stage_eval, cfg, out)
    row = {"variant": label, "seed": cfg.seed, "lam": cfg.lam, "uniform_ppr": cfg.uniform_ppr,
           "hits_at_1_before_serr": before.hits_at_1, "f1_before_serr": before.f1}
    if cfg.use_serr:
        after = _run("rerank", stage_rerank, cfg, out)
        row.update(hits_at_1=after.hits_at_1, f1=after.f1)
    else:
        row.update(hits_at_1=before.hits_at_1, f1=before.f1)
    row.update(serr_delta_hits=row["hits_at_1"] - before.hits_at_1, serr_delta_f1=row["f1"] - before.f1)
    rio.write_jsonl(out / "report.jsonl", [row])
    return row


ABLATIONS = {
    "full": {},
    "no-vgae": {"uniform_ppr": True},
    "no-multitask": {"lam": 1.0},
    "no-serr": {"use_serr": False},
}


def run_ablations(cfg: ExperimentConfig, out: str | Path, seeds=(0, 1, 2), timings: dict | None = None) -> list[dict]:
    """Full pipeline against single-component ablations, averaged over seeds.

    ``no-serr`` reuses the full model and reports its pre-rerank scores.
    Wall-clock seconds per (seed, variant) go into ``timings`` when given;
    they are kept out of the reports so those stay byte-stable.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    per_seed = []
    for seed in seeds:
        for variant in ("full", "no-vgae", "no-multitask"):
            vcfg = cfg.replace(seed=seed, **ABLATIONS[variant])
            start = time.perf_counter()
            row = run_experiment(vcfg, out / f"seed{seed}" / variant, label=variant)
            if timings is not None:
                timings[(seed, variant)] = time.perf_counter() - start
            per_seed.append(row)
            if variant == "full":
                per_seed.append({**row, "variant": "no-serr", "hits_at_1": row["hits_at_1_before_serr"],
                                 "f1": row["f1_before_serr"], "serr_delta_hits": 0.0, "serr_delta_f1": 0.0})
    rows = []
    for variant in ABLATIONS:
        mine = [r for r in per_seed if r["variant"] == variant]
        rows.append({"variant": variant, "seeds": list(seeds),
                     "hits_at_1": float(np.mean([r["hits_at_1"] for r in mine])),
                     "f1": float(np.mean([r["f1"] for r in mine]))})
    rio.write_jsonl(out / "ablation_runs.jsonl", per_seed)
    rio.write_jsonl(out / "ablation.jsonl", rows)
    plotting.plot_ablation(rows, out / "ablation.png")
    return rows


LAMBDA_GRID = tuple(round(0.1 * k, 1) for k in range(1, 11))


def single_peaked(values, tol: float = 0.0) -> bool:
    """True if the sequence rises (weakly) to one maximum then falls (weakly), up to ``tol``."""
    k = int(np.argmax(values))
    rising = all(values[i + 1] >= values[i] - tol for i in range(k))
    falling = all(values[i + 1] <= values[i] + tol for i in range(k, len(values) - 1))
    return rising and falling


def run_lambda_sweep(cfg: ExperimentConfig, out: str | Path, grid=LAMBDA_GRID) -> list[dict]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for lam in grid:
        row = run_experiment(cfg.replace(lam=lam), out / f"lam{lam:.1f}", label=f"lam={lam:.1f}")
        rows.append(row)
    rio.write_jsonl(out / "sweep.jsonl", rows)
    plotting.plot_lambda_sweep(rows, out / "lambda_sweep.png")
    return rows


def stage_export_embeddings(cfg: ExperimentConfig, out: Path, path: str | Path | None = None,
                            checkpoint: str = "model.ckpt") -> Path:
    """Write the prior-weighted relation vectors (PPR matrix times relation table)."""
    kb = load_kb(kb_path(cfg, out))
    model = load_model(cfg, out, checkpoint)
    P = load_ppr(cfg, out)
    with torch.no_grad():
        vectors = P @ model.reasoner.V_R.double().numpy()
    target = Path(path) if path else out / "relation_vectors.txt"
    rio.export_embeddings(target, kb.relations.items, vectors)
    return target

"""Command-line entry point: ``rekbqa <subcommand> [--config FILE] [--seed N] [--out DIR]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io as rio
from . import pipeline
from .config import ExperimentConfig, load_config, parse_config, synthetic_config


def _config(args) -> ExperimentConfig:
    base = synthetic_config() if args.synthetic else ExperimentConfig()
    cfg = load_config(args.config, base) if args.config else base
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    for item in args.set or []:
        key, _, value = item.partition("=")
        cfg = parse_config(f"{key} = {value}", cfg)
    return cfg


def cmd_prepare(cfg, out, args):
    path = pipeline.stage_prepare(cfg, out)
    print(f"subgraphs written to {path}")


def cmd_train_vgae(cfg, out, args):
    P = pipeline.stage_train_vgae(cfg, out)
    print(f"PPR matrix {P.shape[0]}x{P.shape[1]} written to {out / 'ppr.bin'}")


def cmd_train(cfg, out, args):
    res = pipeline.stage_train(cfg, out)
    print(f"best epoch {res.best_epoch}, valid Hits@1 {res.best_valid_hits:.4f}")


def cmd_eval(cfg, out, args):
    rep = pipeline.stage_eval(cfg, out, split=args.split)
    print(json.dumps(rep.summary(), sort_keys=True))


def cmd_rerank(cfg, out, args):
    rep =pipeline.stage_rerank(cfg, out, split=args.split, predictions=args.predictions or "predictions.jsonl")
    print(json.dumps(rep.summary(), sort_keys=True))


def cmd_sweep(cfg, out, args):
    if args.kind == "lambda":
        rows = pipeline.run_lambda_sweep(cfg, out)
    else:
        rows = pipeline.run_ablations(cfg, out, seeds=tuple(args.seeds))
    for row in rows:
        print(json.dumps(row, sort_keys=True))


def cmd_demo(cfg, out, args):
    row = pipeline.run_experiment(cfg, out)
    print(json.dumps(row, sort_keys=True))


def cmd_export_embeddings(cfg, out, args):
    path = pipeline.stage_export_embeddings(cfg, out, args.path)
    print(f"relation vectors written to {path}")


COMMANDS = {
    "prepare": (cmd_prepare, "retrieve and cache per-question subgraphs"),
    "train-vgae": (cmd_train_vgae, "train the relation auto-encoder and write the PPR matrix"),
    "train": (cmd_train, "train the reasoning network"),
    "eval": (cmd_eval, "predict and score a split"),
    "rerank": (cmd_rerank, "apply stem-extraction re-ranking to predictions"),
    "sweep": (cmd_sweep, "loss-weight sweep or ablation table"),
    "demo": (cmd_demo, "run the whole pipeline end to end"),
    "export-embeddings": (cmd_export_embeddings, "write relation vectors as text"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", default="artifacts", help="artifacts directory")
    common.add_argument("--synthetic", action="store_true",
                        help="start from the desk-scale synthetic profile instead of the table defaults")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rekbqa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_)
        if name in ("eval", "rerank"):
            p.add_argument("--split", default="test", choices=pipeline.SPLITS)
        if name == "rerank":
            p.add_argument("--predictions", help="predictions JSON-lines file inside --out")
        if name == "sweep":
            p.add_argument("--kind", choices=("lambda", "ablation"), default="lambda")
            p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
        if name == "export-embeddings":
            p.add_argument("--path", help="output file (default: OUT/relation_vectors.txt)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = COMMANDS[args.command][0]
    try:
        cfg = _config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        handler(cfg, out, args)
    except (pipeline.StageError, rio.FormatError, KeyError, ValueError, FileNotFoundError) as exc:
        # KeyError quotes its message
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""On-disk formats: PPR matrices, checkpoints, JSON lines, embedding text files."""
from __future__ import annotations

import hashlib
import io
import json
import struct
from pathlib import Path
from typing import Iterable

import numpy as np
import torch

PPR_MAGIC = b"PPRM"
PPR_HEADER = struct.Struct("<4sII")  # magic, n_r, float width in bytes
CHECKPOINT_VERSION = 1


class FormatError(ValueError):
    pass


def write_ppr(path: str | Path, P: np.ndarray) -> None:
    P = np.asarray(P)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("PPR matrix must be square")
    with open(path, "wb") as fh:
        fh.write(PPR_HEADER.pack(PPR_MAGIC, P.shape[0], 4))
        fh.write(np.ascontiguousarray(P, dtype="<f4").tobytes())


def read_ppr(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < PPR_HEADER.size:
        raise FormatError("truncated PPR header")
    magic, n, width = PPR_HEADER.unpack_from(data)
    if magic != PPR_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if width != 4:
        raise FormatError(f"unsupported float width {width}")
    body = data[PPR_HEADER.size:]
    if len(body) != n * n * width:
        raise FormatError(f"expected {n * n * width} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(n, n).astype(np.float64)


def write_ppr_json(path: str | Path, P: np.ndarray, relations: list[str]) -> None:
    payload = {"relations": relations, "P": np.asarray(P, dtype=np.float64).tolist()}
    Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")


def dumps_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    Path(path).write_text(dumps_jsonl(records), encoding="utf-8")


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return out


def vocab_hash(items: Iterable[str]) -> str:
    h = hashlib.sha256()
    for item in items:
        h.update(item.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def save_checkpoint(path: str | Path, state: dict[str, torch.Tensor], meta: dict) -> None:
    """npz container of named tensors plus a JSON metadata blob."""
    arrays = {f"param:{k}": v.detach().cpu().numpy() for k, v in state.items()}
    meta = {"format_version": CHECKPOINT_VERSION, **meta}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> tuple[dict[str, torch.Tensor], dict]:
    with np.load(path, allow_pickle=False) as npz:
        if "__meta__" not in npz.files:
            raise FormatError("checkpoint lacks metadata")
        meta = json.loads(npz["__meta__"].tobytes().decode("utf-8"))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise FormatError(f"unsupported checkpoint version {meta.get('format_version')}")
        state = {k[len("param:"):]: torch.from_numpy(npz[k].copy()) for k in npz.files if k.startswith("param:")}
    return state, meta


def export_embeddings(path: str | Path, names: list[str], vectors: np.ndarray) -> None:
    """One ``name v1 ... vd`` line per row."""
    with open(path, "w", encoding="utf-8") as fh:
        for name, row in zip(names, np.asarray(vectors, dtype=np.float64)):
            if any(c.isspace() for c in name):
                raise ValueError(f"name {name!r} contains whitespace")
            fh.write(name + " " + " ".join(repr(float(x)) for x in row) + "\n")


def load_embeddings(path: str | Path) -> tuple[list[str], np.ndarray]:
    names, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if parts:
                names.append(parts[0])
                rows.append([float(x) for x in parts[1:]])
    return names, np.asarray(rows)

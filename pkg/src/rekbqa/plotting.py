"""Report figures written next to the JSON-lines outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 100,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.frameon": False,
    "savefig.bbox": "tight",
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    # fixed metadata keeps reruns byte-stable
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_vgae_loss(losses, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.plot(range(1, len(losses) + 1), losses, color="0.2", lw=1.2)
        ax.set_xlabel("epoch")
        ax.set_ylabel("negative ELBO")
        ax.set_title("relation auto-encoder")
        return _save(fig, path)


def plot_training(history: list[dict], path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        epochs = [h["epoch"] for h in history]
        ax.plot(epochs, [h["loss"] for h in history], label="fused loss", color="C0")
        ax.plot(epochs, [h["loss_answer"] for h in history], label="answer KL", color="C0", ls="--", lw=0.8)
        ax.plot(epochs, [h["loss_relation"] for h in history], label="relation KL", color="C0", ls=":", lw=0.8)
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        if "valid_hits_at_1" in history[0]:
            ax2 = ax.twinx()
            ax2.plot(epochs, [h["valid_hits_at_1"] for h in history], color="C3", label="valid Hits@1")
            ax2.set_ylim(0, 1.02)
            ax2.set_ylabel("valid Hits@1", color="C3")
            ax2.grid(False)
        ax.legend(loc="upper center")
        return _save(fig, path)


def plot_lambda_sweep(rows: list[dict], path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        lams = [r["lam"] for r in rows]
        ax.plot(lams, [r["hits_at_1"] for r in rows], marker="o", label="Hits@1")
        ax.plot(lams, [r["f1"] for r in rows], marker="s", label="F1")
        ax.set_xlabel(r"answer-loss weight $\lambda$")
        ax.set_ylabel("score")
        ax.legend()
        return _save(fig, path)


def plot_ablation(rows: list[dict], path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        labels = [r["variant"] for r in rows]
        x = range(len(rows))
        ax.bar([i - 0.2 for i in x], [r["hits_at_1"] for r in rows], width=0.4, label="Hits@1")
        ax.bar([i + 0.2 for i in x], [r["f1"] for r in rows], width=0.4, label="F1")
        ax.set_xticks(list(x))
        ax.set_xticklabels(labels, rotation=20)
        ax.set_ylim(0, 1.05)
        ax.legend(loc="lower right")
        return _save(fig, path)

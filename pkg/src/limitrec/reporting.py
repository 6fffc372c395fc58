"""Report files: JSON/CSV output with matplotlib figures rendered alongside."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def write_manifest(dataset, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(dataset.manifest(), indent=2) + "\n")
    return path


def write_eval_report(report, out_dir, stem="eval"):
    """Emit the metric report as JSON plus an aligned text table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{stem}.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    (out_dir / f"{stem}.txt").write_text(report.to_table() + "\n")
    return out_dir / f"{stem}.json"


def plot_training_curves(log, path):
    """Loss components and validation recall over epochs, one figure."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    epochs = [r["epoch"] for r in log]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    for key in ("total", "loss_O", "loss_C", "loss_I"):
        ax1.plot(epochs, [r[key] for r in log], label=key)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("mean loss per pair")
    ax1.legend(fontsize=8)
    val = [(r["epoch"], r["valid_recall@20"]) for r in log if "valid_recall@20" in r]
    if val:
        ax2.plot([e for e, _ in val], [v for _, v in val], marker="o")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("validation recall@20")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


SWEEP_FIELDS = ("lam", "gamma", "K", "recall@20", "ndcg@20")


def write_sweep_csv(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in SWEEP_FIELDS})
    return path


def plot_sweep(rows, path, metric="recall@20"):
    """Metric vs. gamma, one line per lambda, faceted over K if varied."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ks = sorted({row["K"] for row in rows})
    fig, axes = plt.subplots(1, len(ks), figsize=(4.5 * len(ks), 3.5), squeeze=False)
    for ax, k in zip(axes[0], ks):
        sub = [r for r in rows if r["K"] == k]
        for lam in sorted({r["lam"] for r in sub}):
            pts = sorted((r["gamma"], r[metric]) for r in sub if r["lam"] == lam)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                    label=f"lam={lam}")
        ax.set_title(f"K={k}")
        ax.set_xlabel("gamma")
        ax.set_ylabel(metric)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

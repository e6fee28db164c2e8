"""Delimited outputs and the matplotlib figures rendered alongside them.

Every report path writes machine-readable CSV/JSON first and a PNG next to
it. Figures are rendered with the Agg backend and stripped metadata so runs
stay reproducible byte-for-byte in their delimited outputs.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = [
    "METRIC_COLUMNS", "LOSS_COLUMNS", "write_metrics_csv", "write_loss_csv",
    "write_json", "plot_training_curves", "plot_qtype_bars", "plot_delta_bars",
    "plot_fraction_curve", "plot_gradcheck_bars",
]

METRIC_COLUMNS = [
    "epoch", "split", "overall", "binary", "open", "consistency", "validity",
    "acc_relation", "acc_attribute", "acc_object", "acc_global", "acc_category",
    "L_sup", "L_prime", "J_e", "repr_std",
]

LOSS_COLUMNS = ["step", "L_sup", "L_prime", "J_e", "total"]

_SAVE_KW = {"dpi": 110, "metadata": {"Software": None}}


def write_metrics_csv(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in METRIC_COLUMNS})


def write_loss_csv(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=LOSS_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in LOSS_COLUMNS})


def write_json(obj, path: Path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def plot_training_curves(metrics: list[dict], loss_rows: list[dict], path: Path) -> None:
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
    epochs = [m["epoch"] for m in metrics]
    for key in ("overall", "binary", "open"):
        axes[0].plot(epochs, [m[key] for m in metrics], marker="o", ms=3, label=key)
    axes[0].set_xlabel("epoch")
    axes[0].set_ylabel("val accuracy")
    axes[0].legend(fontsize=8)
    axes[0].grid(alpha=0.3)

    steps = [r["step"] for r in loss_rows]
    for key in ("total", "L_sup", "L_prime", "J_e"):
        vals = [r[key] for r in loss_rows]
        if any(v != 0 for v in vals):
            axes[1].plot(steps, vals, lw=0.9, label=key)
    axes[1].set_xlabel("step")
    axes[1].set_ylabel("loss")
    axes[1].legend(fontsize=8)
    axes[1].grid(alpha=0.3)

    axes[2].plot(epochs, [m["repr_std"] for m in metrics], marker="o", ms=3, color="tab:red")
    axes[2].set_xlabel("epoch")
    axes[2].set_ylabel("normalized graph-vector std")
    axes[2].grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_qtype_bars(report: dict, path: Path) -> None:
    per_q = report["per_qtype"]
    names = list(per_q) + ["overall"]
    vals = [per_q[q] for q in per_q] + [report["overall"]]
    fig, ax = plt.subplots(figsize=(6.5, 3.4))
    ax.bar(names, vals, color=["tab:blue"] * (len(names) - 1) + ["tab:orange"])
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1)
    for i, v in enumerate(vals):
        ax.text(i, v + 0.01, f"{v:.2f}", ha="center", fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_delta_bars(rows: list[dict], path: Path, value_key: str = "delta",
                    title: str | None = None) -> None:
    names = [r["name"] for r in rows]
    vals = [r[value_key] for r in rows]
    fig, ax = plt.subplots(figsize=(max(5.0, 1.4 * len(rows)), 3.4))
    colors = ["tab:red" if v < 0 else "tab:green" for v in vals]
    ax.bar(names, vals, color=colors)
    ax.axhline(0.0, color="black", lw=0.8)
    ax.set_ylabel(value_key)
    if title:
        ax.set_title(title, fontsize=10)
    for i, v in enumerate(vals):
        ax.text(i, v, f"{v:+.3f}", ha="center",
                va="bottom" if v >= 0 else "top", fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    plt.setp(ax.get_xticklabels(), rotation=15, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_fraction_curve(rows: list[dict], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    fracs = [r["fraction"] * 100 for r in rows]
    for key in ("overall", "binary", "open"):
        ax.plot(fracs, [r[key] for r in rows], marker="o", label=key)
    ax.set_xlabel("labeled data (%)")
    ax.set_ylabel("test accuracy")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_gradcheck_bars(records: list[dict], tolerance: float, path: Path) -> None:
    names = [r["config"] for r in records]
    vals = [max(r["max_rel_err"], 1e-16) for r in records]
    fig, ax = plt.subplots(figsize=(max(5.0, 1.1 * len(records)), 3.4))
    ax.bar(names, vals, color="tab:blue")
    ax.axhline(tolerance, color="tab:red", lw=1.0, ls="--", label=f"tolerance {tolerance:g}")
    ax.set_yscale("log")
    ax.set_ylabel("max relative error")
    ax.legend(fontsize=8)
    plt.setp(ax.get_xticklabels(), rotation=15, ha="right", fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)

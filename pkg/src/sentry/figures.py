"""Figure rendering for reports: objective curves, Pareto fronts, metric bars.

Everything is written to files (Agg backend); a CSV with the plotted series
lands next to each figure so the numbers stay greppable.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import METRIC_NAMES  # noqa: E402


def save_search_figures(doc: dict, outdir: str) -> list[str]:
    """Objective-vs-generation curves, the final Pareto front, and the
    underlying series as CSV. Returns the written paths."""
    os.makedirs(outdir, exist_ok=True)
    written: list[str] = []
    history = doc.get("history")
    if history:
        gens = range(len(history["best_coverage"]))
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
        ax1.plot(gens, history["best_coverage"], label="best", color="tab:blue")
        ax1.plot(gens, history["avg_coverage"], label="average",
                 color="tab:blue", linestyle="--")
        ax1.set_xlabel("generation")
        ax1.set_ylabel("statement coverage")
        ax1.set_ylim(-0.02, 1.02)
        ax1.legend()
        ax1.set_title("coverage")
        ax2.plot(gens, history["best_accuracy"], label="best", color="tab:red")
        ax2.plot(gens, history["avg_accuracy"], label="average",
                 color="tab:red", linestyle="--")
        ax2.set_xlabel("generation")
        ax2.set_ylabel("detection accuracy")
        ax2.set_ylim(-0.02, 1.02)
        ax2.legend()
        ax2.set_title("accuracy")
        fig.suptitle(os.path.basename(doc.get("path", "")))
        fig.tight_layout()
        path = os.path.join(outdir, "objectives.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

        csv_path = os.path.join(outdir, "history.csv")
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["generation", "best_coverage", "avg_coverage",
                        "best_accuracy", "avg_accuracy"])
            for g in gens:
                w.writerow([g, history["best_coverage"][g], history["avg_coverage"][g],
                            history["best_accuracy"][g], history["avg_accuracy"][g]])
        written.append(csv_path)

    front = doc.get("pareto_front")
    if front:
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.scatter([p["accuracy"] for p in front], [p["coverage"] for p in front],
                   color="tab:green")
        ax.set_xlabel("detection accuracy")
        ax.set_ylabel("statement coverage")
        ax.set_xlim(-0.05, 1.05)
        ax.set_ylim(-0.05, 1.05)
        ax.set_title("final Pareto front")
        fig.tight_layout()
        path = os.path.join(outdir, "pareto_front.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def save_evaluate_figures(doc: dict, outdir: str) -> list[str]:
    """Grouped per-type metric bars plus a coverage before/after bar."""
    os.makedirs(outdir, exist_ok=True)
    written: list[str] = []
    per_type = doc["per_type"]
    shown = ("accuracy", "precision", "recall", "f1_score", "auc", "mcc", "fmi")
    types = list(per_type)

    fig, ax = plt.subplots(figsize=(11, 4.5))
    width = 1.0 / (len(shown) + 1)
    for i, metric in enumerate(shown):
        xs = [t_i + i * width for t_i in range(len(types))]
        ax.bar(xs, [per_type[t][metric] for t in types], width=width, label=metric)
    ax.set_xticks([t_i + width * (len(shown) - 1) / 2 for t_i in range(len(types))])
    ax.set_xticklabels(types, rotation=10)
    ax.set_ylim(-1.02 if any(per_type[t]["mcc"] < 0 for t in types) else 0, 1.05)
    ax.legend(ncol=4, fontsize=8)
    ax.set_title(f"evaluation metrics ({doc['mode']} mode)")
    fig.tight_layout()
    path = os.path.join(outdir, "metrics_by_type.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    cov = doc["coverage"]
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.bar([0, 1], [cov["mean_initial"], cov["mean_final"]],
           color=["tab:gray", "tab:blue"])
    ax.set_xticks([0, 1])
    ax.set_xticklabels(["initial", "final"])
    ax.set_ylim(0, 1.05)
    ax.set_title("mean statement coverage")
    fig.tight_layout()
    path = os.path.join(outdir, "coverage_improvement.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    csv_path = os.path.join(outdir, "metrics.csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["type"] + list(METRIC_NAMES) + ["auc", "tp", "fp", "fn", "tn"])
        for t in types:
            row = per_type[t]
            cmx = row["confusion"]
            w.writerow([t] + [row[m] for m in METRIC_NAMES] + [row["auc"]]
                       + [cmx["tp"], cmx["fp"], cmx["fn"], cmx["tn"]])
    written.append(csv_path)
    return written

"""Evaluation outputs: delimited records, a text table, JSON, and figures.

Everything written here is deterministic for a given report (fixed float
formatting, sorted keys, no timestamps); wall-clock information belongs
in the run log sidecar, not in report files. Figures are rendered with
the Agg backend straight to PNG next to the delimited output.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .identify import EvaluationReport, SEVERITY_KINDS
from .panel import N_RIVETS

SEVERITY_UNITS = {"crack": "mm", "hole_expansion": "fraction", "added_mass": "kg"}


def write_records_csv(report: EvaluationReport, path) -> None:
    """Per-scenario rows: identity, truth, predictions, and all 34 scores."""
    header = (["scenario_id", "kind", "true_rivets", "true_severity",
               "predicted_severity", "flagged_rivets", "wrong_bits", "hit"]
              + [f"score_{i:02d}" for i in range(N_RIVETS)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec in report.records:
            writer.writerow(
                [rec.index, rec.kind,
                 "|".join(str(r) for r in rec.true_rivets),
                 repr(rec.true_severity),
                 "" if rec.predicted_severity is None else repr(rec.predicted_severity),
                 "|".join(str(r) for r in rec.flagged),
                 rec.wrong_bits, int(rec.hit)]
                + [repr(float(s)) for s in rec.scores])


def write_history_csv(history: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mse", "objective"])
        for epoch, entry in enumerate(history, start=1):
            if isinstance(entry, tuple):
                writer.writerow([epoch, repr(entry[0]), repr(entry[1])])
            else:
                writer.writerow([epoch, repr(entry), repr(entry)])


def report_as_dict(report: EvaluationReport) -> dict:
    kinds = {}
    for kind in SEVERITY_KINDS:
        err = report.severity_mean_rel_err_pct.get(kind, float("nan"))
        kinds[kind] = None if np.isnan(err) else err
    return {
        "n_scenarios": len(report.records),
        "misclassification_pct": report.misclassification_pct,
        "localization_hit_rate": report.localization_hit_rate,
        "severity_mean_rel_err_pct": kinds,
        "n_by_kind": {k: sum(1 for r in report.records if r.kind == k)
                      for k in sorted({r.kind for r in report.records})},
    }


def write_report_json(report: EvaluationReport, path) -> None:
    Path(path).write_text(json.dumps(report_as_dict(report), sort_keys=True, indent=2) + "\n")


def format_report_text(report: EvaluationReport) -> str:
    d = report_as_dict(report)
    lines = [
        "damage identification report",
        "============================",
        f"scenarios evaluated      : {d['n_scenarios']}",
        "by kind                  : " + ", ".join(
            f"{k}={v}" for k, v in d["n_by_kind"].items()),
        f"misclassification        : {d['misclassification_pct']:.4f} % of rivet bits",
        f"hit rate (adjacent credit): {d['localization_hit_rate']:.4f}",
        "severity mean relative error:",
    ]
    for kind in SEVERITY_KINDS:
        err = d["severity_mean_rel_err_pct"][kind]
        value = "n/a" if err is None else f"{err:.2f} %"
        lines.append(f"  {kind:<16s}: {value} ({SEVERITY_UNITS[kind]})")
    return "\n".join(lines) + "\n"


def write_report_text(report: EvaluationReport, path) -> None:
    Path(path).write_text(format_report_text(report))


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def _save(fig, path):
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_training_history(histories: dict[str, list], path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for name in sorted(histories):
        values = [h[0] if isinstance(h, tuple) else h for h in histories[name]]
        ax.semilogy(np.arange(1, len(values) + 1), values, label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training MSE")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def plot_localization_scores(report: EvaluationReport, path) -> None:
    """Bar plot of per-rivet scores for the first damaged test scenario."""
    rec = next((r for r in report.records if r.true_rivets), report.records[0])
    fig, ax = plt.subplots(figsize=(7.0, 3.2))
    colors = ["tab:red" if i in rec.true_rivets else "tab:blue"
              for i in range(N_RIVETS)]
    ax.bar(np.arange(N_RIVETS), rec.scores, color=colors)
    ax.axhline(0.5, color="k", lw=0.8, ls="--")
    ax.set_xlabel("rivet index")
    ax.set_ylabel("network score")
    ax.set_title(f"scenario {rec.index} ({rec.kind}), true rivets in red", fontsize=9)
    ax.set_ylim(0, 1)
    fig.tight_layout()
    _save(fig, path)


def plot_severity_scatter(report: EvaluationReport, path) -> None:
    fig, axes = plt.subplots(1, 3, figsize=(9.0, 3.0))
    for ax, kind in zip(axes, SEVERITY_KINDS):
        truth = [r.true_severity for r in report.records
                 if r.kind == kind and r.predicted_severity is not None]
        pred = [r.predicted_severity for r in report.records
                if r.kind == kind and r.predicted_severity is not None]
        if truth:
            lim = max(max(truth), max(pred)) * 1.05
            ax.plot([0, lim], [0, lim], "k--", lw=0.8)
            ax.plot(truth, pred, "o", ms=3, alpha=0.7)
            ax.set_xlim(0, lim)
            ax.set_ylim(0, lim)
        ax.set_title(kind, fontsize=9)
        ax.set_xlabel(f"true ({SEVERITY_UNITS[kind]})")
    axes[0].set_ylabel("predicted")
    fig.tight_layout()
    _save(fig, path)


def plot_fingerprints(features: dict[str, np.ndarray], path) -> None:
    """Overlaid fingerprint vectors, one line per labeled scenario."""
    fig, ax = plt.subplots(figsize=(7.0, 3.2))
    for label in sorted(features):
        ax.plot(features[label], lw=1.0, label=label)
    ax.set_xlabel("fingerprint component")
    ax.set_ylabel("projection value")
    ax.legend(fontsize=7)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def render_report_figures(report: EvaluationReport, histories: dict[str, list],
                          fingerprints: dict[str, np.ndarray], out_dir) -> list[str]:
    """Render the full figure set; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if histories:
        p = out_dir / "training_history.png"
        plot_training_history(histories, p)
        written.append(str(p))
    p = out_dir / "localization_scores.png"
    plot_localization_scores(report, p)
    written.append(str(p))
    p = out_dir / "severity_scatter.png"
    plot_severity_scatter(report, p)
    written.append(str(p))
    if fingerprints:
        p = out_dir / "fingerprints.png"
        plot_fingerprints(fingerprints, p)
        written.append(str(p))
    return written

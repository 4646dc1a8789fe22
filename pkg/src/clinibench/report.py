"""Report emission: metric JSON, a flat CSV row per run, and figures.

Figures are rendered to PNG files next to the delimited output: per-tertile
recall/precision bars, micro-F1 by input-length bucket, and generation
diagnostics (average predicted codes vs. the top-n target, valid-JSON
rate).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

CSV_COLUMNS = [
    "dataset",
    "model",
    "setting",
    "n",
    "n_notes",
    "macro_recall",
    "macro_precision",
    "macro_f1",
    "map",
    "map_example",
    "md_acc",
    "micro_f1",
    "head_recall",
    "head_precision",
    "body_recall",
    "body_precision",
    "tail_recall",
    "tail_precision",
    "valid_json_rate",
    "avg_pred_codes",
]


def report_row(report: Mapping, dataset: str = "", model: str = "", setting: str = "") -> dict:
    per_tertile = report.get("per_tertile") or {}

    def tert(name: str, metric: str):
        cell = per_tertile.get(name)
        return cell[metric] if cell else None

    return {
        "dataset": dataset,
        "model": model,
        "setting": setting,
        "n": report.get("n"),
        "n_notes": report.get("n_notes"),
        "macro_recall": report.get("macro_recall"),
        "macro_precision": report.get("macro_precision"),
        "macro_f1": report.get("macro_f1"),
        "map": report.get("map"),
        "map_example": report.get("map_example"),
        "md_acc": report.get("md_acc"),
        "micro_f1": report.get("micro_f1"),
        "head_recall": tert("head", "recall"),
        "head_precision": tert("head", "precision"),
        "body_recall": tert("body", "recall"),
        "body_precision": tert("body", "precision"),
        "tail_recall": tert("tail", "recall"),
        "tail_precision": tert("tail", "precision"),
        "valid_json_rate": report.get("valid_json_rate"),
        "avg_pred_codes": report.get("avg_pred_codes"),
    }


def write_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k) for k in CSV_COLUMNS})


def mean_row(rows: Sequence[dict], label: str = "mean") -> dict:
    """Unweighted mean over runs (e.g. aggregating the ICD-9 and ICD-10
    splits of one dataset). Non-numeric and missing cells are skipped."""
    out = {"dataset": label, "model": "", "setting": "unweighted-mean"}
    for column in CSV_COLUMNS[3:]:
        values = [row[column] for row in rows if isinstance(row.get(column), (int, float))]
        out[column] = sum(values) / len(values) if values else None
    return out


def _label_for(row: dict) -> str:
    parts = [row.get("model") or "", row.get("setting") or "", row.get("dataset") or ""]
    label = " ".join(p for p in parts if p).strip()
    return label or "run"


def render_figures(rows: Sequence[dict], reports: Sequence[Mapping], outdir) -> list[Path]:
    """Render comparison figures for one or more runs; returns written paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    labels = [_label_for(row) for row in rows]

    # grouped per-tertile bars, one panel for recall and one for precision
    if any(report.get("per_tertile") for report in reports):
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), sharey=True)
        tertiles = ("head", "body", "tail")
        x = range(len(tertiles))
        width = 0.8 / max(len(reports), 1)
        for metric, ax in zip(("recall", "precision"), axes):
            for i, (label, report) in enumerate(zip(labels, reports)):
                per_tertile = report.get("per_tertile") or {}
                values = [
                    (per_tertile.get(t) or {}).get(metric) or 0.0 for t in tertiles
                ]
                ax.bar([xi + i * width for xi in x], values, width=width, label=label)
            ax.set_xticks([xi + width * (len(reports) - 1) / 2 for xi in x])
            ax.set_xticklabels(tertiles)
            ax.set_title(f"macro {metric} by class-frequency tertile")
            ax.set_ylim(0, 1)
        axes[0].legend(fontsize=7)
        fig.tight_layout()
        path = outdir / "tertiles.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    # micro-F1 by input-length bucket
    if any(report.get("per_bucket") for report in reports):
        fig, ax = plt.subplots(figsize=(6, 3.6))
        for label, report in zip(labels, reports):
            buckets = report.get("per_bucket") or {}
            names = list(buckets)
            values = [buckets[b] if buckets[b] is not None else float("nan") for b in names]
            ax.plot(names, values, marker="o", label=label)
        ax.set_xlabel("input length (tokens)")
        ax.set_ylabel("micro F1")
        ax.set_title("micro F1 by input length")
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = outdir / "length_buckets.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    # generation diagnostics: predicted-code count vs target, valid JSON rate
    if any(report.get("avg_pred_codes") is not None for report in reports):
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
        xs = range(len(reports))
        counts = [report.get("avg_pred_codes") or 0.0 for report in reports]
        axes[0].bar(xs, counts)
        n_target = next((report.get("n") for report in reports if report.get("n")), 20)
        axes[0].axhline(n_target, linestyle="--", linewidth=1)
        axes[0].set_xticks(list(xs))
        axes[0].set_xticklabels(labels, rotation=20, ha="right", fontsize=7)
        axes[0].set_title("avg predicted codes after dedup")
        rates = [report.get("valid_json_rate") or 0.0 for report in reports]
        axes[1].bar(xs, rates)
        axes[1].set_ylim(0, 1)
        axes[1].set_xticks(list(xs))
        axes[1].set_xticklabels(labels, rotation=20, ha="right", fontsize=7)
        axes[1].set_title("valid JSON rate")
        fig.tight_layout()
        path = outdir / "diagnostics.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def load_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)

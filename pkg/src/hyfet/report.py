"""Post-training analysis tables and figures.

Three analyses over a trained pipeline, each emitted as a CSV table, a
rendered PNG figure, and a plain-text table for terminal display:

- per-label precision/recall/F1/support on a chosen split;
- label-embedding norms grouped by hierarchy depth (for tangent-space
  scoring the norm is the Euclidean norm of the type's point in ball
  coordinates — hyperboloid points are converted — so both manifold
  models report on the same [0, sqrt(K)) scale; ambient scoring falls
  back to the raw weight-row norm);
- a correction summary contrasting predictions from the full model with
  a head that skips the smoothing stack (same trained weights), listing
  every mention whose predicted type set changed.

A fourth figure plots training curves from a metrics log CSV.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from hyfet.manifolds import hyperboloid
from hyfet.pipeline import Pipeline
from hyfet.trainer import LOG_HEADER
from hyfet.typer import ScoreSpace, per_label_counts, predict


class ReportError(RuntimeError):
    """Analysis not applicable to the trained configuration."""


# -- per-label table -----------------------------------------------------------


@dataclass(frozen=True)
class LabelRow:
    path: str
    depth: int
    precision: float
    recall: float
    f1: float
    support: int


def per_label_rows(pipeline: Pipeline, split: str) -> list[LabelRow]:
    _, gold, pred = pipeline.predictions(split)
    hierarchy = pipeline.hierarchy
    tp, fp, fn = per_label_counts(gold, pred, len(hierarchy))
    rows = []
    for t in range(len(hierarchy)):
        p = tp[t] / (tp[t] + fp[t]) if tp[t] + fp[t] else 0.0
        r = tp[t] / (tp[t] + fn[t]) if tp[t] + fn[t] else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        rows.append(
            LabelRow(hierarchy.path(t), hierarchy.depth(t), p, r, f1, int(tp[t] + fn[t]))
        )
    return rows


# -- label-norm table ----------------------------------------------------------


@dataclass(frozen=True)
class NormRow:
    path: str
    depth: int
    norm: float


def label_norm_rows(pipeline: Pipeline) -> list[NormRow]:
    model = pipeline.model
    hierarchy = pipeline.hierarchy
    if model.scorer.space is ScoreSpace.TANGENT:
        points = model.scorer.label_points()
        if model.geometry.is_hyperboloid:
            points = hyperboloid.to_ball(points, model.geometry.K)
        norms = np.linalg.norm(points, axis=-1)
    else:
        norms = np.linalg.norm(model.scorer.phi.data, axis=-1)
    return [
        NormRow(hierarchy.path(t), hierarchy.depth(t), float(norms[t]))
        for t in range(len(hierarchy))
    ]


def depth_means(rows: list[NormRow]) -> list[tuple[int, float]]:
    """Mean label norm per hierarchy depth, shallow to deep."""
    by_depth: dict[int, list[float]] = {}
    for row in rows:
        by_depth.setdefault(row.depth, []).append(row.norm)
    return [(d, float(np.mean(by_depth[d]))) for d in sorted(by_depth)]


# -- correction analysis -------------------------------------------------------


@dataclass(frozen=True)
class CorrectionRow:
    sentence: int
    mention: int
    gold: tuple[str, ...]
    without_smoothing: tuple[str, ...]
    full_model: tuple[str, ...]
    outcome: str  # corrected | damaged | retyped


@dataclass(frozen=True)
class CorrectionSummary:
    total: int
    changed: int
    corrected: int
    damaged: int
    retyped: int


def smoothing_free_scores(pipeline: Pipeline) -> np.ndarray:
    """Scores from the trained weights with the smoothing stack skipped."""
    model = pipeline.model
    width = model.config.encoder.output_dim
    layer_dim = model.config.trainer.layer_dim or width
    if model.config.trainer.layers and layer_dim != width:
        raise ReportError(
            "correction analysis needs the stack to preserve width "
            f"(encoder emits {width}, stack emits {layer_dim})"
        )
    points = model.lift(model.encode(pipeline.records))
    return np.asarray(model.scorer.scores(points).data)


def correction_report(
    pipeline: Pipeline, split: str
) -> tuple[CorrectionSummary, list[CorrectionRow]]:
    view = pipeline._view(split)
    records = pipeline.split_records(split)
    full = predict(pipeline.forward_scores()[view.start : view.stop])
    bare = predict(smoothing_free_scores(pipeline)[view.start : view.stop])
    hierarchy = pipeline.hierarchy

    def paths(type_ids):
        return tuple(hierarchy.path(t) for t in sorted(set(type_ids)))

    rows = []
    corrected = damaged = retyped = 0
    for record, f, b in zip(records, full, bare):
        if set(f) == set(b):
            continue
        gold = set(record.labels)
        if set(f) == gold:
            outcome = "corrected"
            corrected += 1
        elif set(b) == gold:
            outcome = "damaged"
            damaged += 1
        else:
            outcome = "retyped"
            retyped += 1
        rows.append(
            CorrectionRow(
                record.sentence_index,
                record.mention_index,
                paths(record.labels),
                paths(b),
                paths(f),
                outcome,
            )
        )
    summary = CorrectionSummary(len(records), len(rows), corrected, damaged, retyped)
    return summary, rows


# -- rendering -----------------------------------------------------------------


def write_csv(path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v!r}" if isinstance(v, float) else v for v in row])


def format_table(header: list[str], rows: list[tuple]) -> str:
    """Fixed-width plain-text table."""
    cells = [[str(h) for h in header]]
    for row in rows:
        cells.append([f"{v:.4f}" if isinstance(v, float) else str(v) for v in row])
    widths = [max(len(line[i]) for line in cells) for i in range(len(header))]
    lines = []
    for k, line in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def plot_per_label(rows: list[LabelRow], path) -> None:
    fig, ax = plt.subplots(figsize=(8, max(2.5, 0.3 * len(rows))))
    y = np.arange(len(rows))
    ax.barh(y, [r.f1 for r in rows], color="tab:blue")
    ax.set_yticks(y, [r.path for r in rows], fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("F1")
    ax.set_xlim(0, 1)
    ax.set_title("Per-label F1")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_label_norms(rows: list[NormRow], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter([r.depth for r in rows], [r.norm for r in rows], alpha=0.6, label="type")
    means = depth_means(rows)
    ax.plot([d for d, _ in means], [m for _, m in means], "r-o", label="depth mean")
    ax.set_xlabel("hierarchy depth")
    ax.set_ylabel("label norm")
    ax.set_title("Label-embedding norm by depth")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_corrections(summary: CorrectionSummary, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    names = ["corrected", "damaged", "retyped", "unchanged"]
    values = [
        summary.corrected,
        summary.damaged,
        summary.retyped,
        summary.total - summary.changed,
    ]
    ax.bar(names, values, color=["tab:green", "tab:red", "tab:orange", "tab:gray"])
    ax.set_ylabel("mentions")
    ax.set_title("Effect of smoothing on predictions")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_training_curves(log_path, path) -> None:
    with open(log_path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != LOG_HEADER.split(","):
            raise ReportError(f"{log_path}: not a training log (header {header})")
        data = np.array([[float(v) for v in row] for row in reader])
    if data.size == 0:
        raise ReportError(f"{log_path}: training log holds no epochs")
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(data[:, 0], data[:, 1], "k-", label="loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    twin = ax.twinx()
    for col, name, style in ((2, "strict", "b-"), (3, "macro F1", "g--"), (4, "micro F1", "r:")):
        twin.plot(data[:, 0], data[:, col], style, label=name)
    twin.set_ylabel("metric")
    twin.set_ylim(0, 1)
    handles, labels = ax.get_legend_handles_labels()
    h2, l2 = twin.get_legend_handles_labels()
    ax.legend(handles + h2, labels + l2, loc="center right")
    ax.set_title("Training curves")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report(
    pipeline: Pipeline, split: str, out_dir, log_path=None
) -> tuple[dict[str, str], list[Path]]:
    """Write every analysis to `out_dir`; return text tables and file list."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    texts: dict[str, str] = {}
    files: list[Path] = []

    rows = per_label_rows(pipeline, split)
    header = ["label", "depth", "precision", "recall", "f1", "support"]
    tuples = [(r.path, r.depth, r.precision, r.recall, r.f1, r.support) for r in rows]
    write_csv(out / "per_label.csv", header, tuples)
    plot_per_label(rows, out / "per_label.png")
    texts["per_label"] = format_table(header, tuples)
    files += [out / "per_label.csv", out / "per_label.png"]

    norms = label_norm_rows(pipeline)
    header = ["label", "depth", "norm"]
    tuples = [(r.path, r.depth, r.norm) for r in norms]
    write_csv(out / "label_norms.csv", header, tuples)
    plot_label_norms(norms, out / "label_norms.png")
    means = depth_means(norms)
    texts["label_norms"] = format_table(header, tuples) + "\n\n" + format_table(
        ["depth", "mean_norm"], means
    )
    files += [out / "label_norms.csv", out / "label_norms.png"]

    try:
        summary, changed = correction_report(pipeline, split)
    except ReportError as exc:
        texts["corrections"] = f"correction analysis skipped: {exc}"
    else:
        header = ["sentence", "mention", "gold", "without_smoothing", "full_model", "outcome"]
        tuples = [
            (
                r.sentence,
                r.mention,
                " ".join(r.gold),
                " ".join(r.without_smoothing),
                " ".join(r.full_model),
                r.outcome,
            )
            for r in changed
        ]
        write_csv(out / "corrections.csv", header, tuples)
        plot_corrections(summary, out / "corrections.png")
        texts["corrections"] = (
            format_table(
                ["total", "changed", "corrected", "damaged", "retyped"],
                [(summary.total, summary.changed, summary.corrected,
                  summary.damaged, summary.retyped)],
            )
            + "\n\n"
            + format_table(header, tuples)
        )
        files += [out / "corrections.csv", out / "corrections.png"]

    if log_path is not None:
        plot_training_curves(log_path, out / "training_curves.png")
        files.append(out / "training_curves.png")

    return texts, files

"""Report documents and their companion figures.

Reports are flat ``key=value`` text with a fixed key order (schema
``osbench_report_v1``), so identical runs produce byte-identical files and
diffs stay readable.  The confusion matrix is embedded row-major.

Alongside each delimited output the report path can render a matplotlib
figure: a row-normalized confusion heatmap next to an evaluation report, a
class-colored map next to a decision-grid export, and a ranking bar chart
next to a fusion table.  Figures are rendered with the Agg backend and
never replace the text outputs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import UNKNOWN_NAME, Label
from .errors import ManifestError
from .metrics import ConfusionMatrix, MetricsReport

SCHEMA = "osbench_report_v1"
PREDICTIONS_SCHEMA = "osbench_predictions_v1"


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_report(report: MetricsReport, meta: dict[str, object], class_names: list[str]) -> str:
    """Render the report document; `meta` keys keep their given order."""
    lines = [f"schema={SCHEMA}"]
    for key, value in meta.items():
        lines.append(f"{key}={_fmt(value)}")
    lines.append(f"n_known={report.confusion.n}")
    lines.append(f"samples={report.confusion.total}")
    for name in MetricsReport.FIELD_ORDER:
        lines.append(f"{name}={_fmt(getattr(report, name))}")
    lines.append("classes=" + ",".join(class_names))
    k = report.confusion.n + 1
    lines.append(f"confusion_shape={k}x{k}")
    flat = " ".join(str(int(v)) for v in report.confusion.counts.ravel())
    lines.append(f"confusion={flat}")
    return "\n".join(lines) + "\n"


def parse_report(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if "=" not in line:
                raise ManifestError(f"{path}: bad report line {line!r}")
            key, value = line.split("=", 1)
            out[key] = value
    if out.get("schema") != SCHEMA:
        raise ManifestError(f"{path}: not an {SCHEMA} document")
    return out


# -- prediction dumps (for post-fusion) ----------------------------------


def write_predictions(
    path: str,
    keys: list[str],
    truths: list[Label],
    preds: list[Label],
    class_names: list[str],
    meta: dict[str, object],
) -> None:
    name_of = dict(enumerate(class_names))

    def render(lab: Label) -> str:
        return UNKNOWN_NAME if lab.is_unknown else name_of[lab.class_id]

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"schema={PREDICTIONS_SCHEMA}\n")
        for key, value in meta.items():
            fh.write(f"{key}={_fmt(value)}\n")
        fh.write("classes=" + ",".join(class_names) + "\n")
        for key, t, p in zip(keys, truths, preds):
            fh.write(f"row,{key},{render(t)},{render(p)}\n")


def read_predictions(path: str):
    """Returns (keys, truths, preds, class_names, meta)."""
    meta: dict[str, str] = {}
    keys: list[str] = []
    truths: list[Label] = []
    preds: list[Label] = []
    class_names: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("row,"):
                _, key, t_name, p_name = line.split(",", 3)
                id_of = {name: i for i, name in enumerate(class_names)}

                def to_label(name: str) -> Label:
                    if name == UNKNOWN_NAME:
                        return Label(None)
                    if name not in id_of:
                        raise ManifestError(f"{path}: unknown class name {name!r}")
                    return Label(id_of[name])

                keys.append(key)
                truths.append(to_label(t_name))
                preds.append(to_label(p_name))
                continue
            if "=" in line:
                k, v = line.split("=", 1)
                if k == "classes":
                    class_names = [n for n in v.split(",") if n]
                else:
                    meta[k] = v
                continue
            raise ManifestError(f"{path}: bad predictions line {line!r}")
    if meta.get("schema") != PREDICTIONS_SCHEMA:
        raise ManifestError(f"{path}: not an {PREDICTIONS_SCHEMA} document")
    return keys, truths, preds, class_names, meta


# -- figures --------------------------------------------------------------


def render_confusion_figure(cm: ConfusionMatrix, class_names: list[str], path: str) -> None:
    """Row-normalized confusion heatmap with the unknown label last."""
    labels = list(class_names) + [UNKNOWN_NAME]
    counts = cm.counts.astype(np.float64)
    row_sums = counts.sum(axis=1, keepdims=True)
    norm = np.divide(counts, row_sums, out=np.zeros_like(counts), where=row_sums > 0)

    size = max(4.0, 0.45 * len(labels) + 2.0)
    fig, ax = plt.subplots(figsize=(size, size))
    im = ax.imshow(norm, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(labels)), labels, rotation=90, fontsize=7)
    ax.set_yticks(range(len(labels)), labels, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if len(labels) <= 20:
        for i in range(len(labels)):
            for j in range(len(labels)):
                if cm.counts[i, j]:
                    ax.text(
                        j, i, str(int(cm.counts[i, j])),
                        ha="center", va="center", fontsize=6,
                        color="white" if norm[i, j] > 0.5 else "black",
                    )
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_grid_figure(
    rows: list[tuple[float, float, Label]],
    resolution: int,
    class_names: list[str],
    path: str,
    dims: tuple[int, int],
) -> None:
    """Decision-grid image: one color per class, white for unknown."""
    n = len(class_names)
    idx = np.asarray(
        [n if lab.is_unknown else lab.class_id for _, _, lab in rows], dtype=np.int64
    ).reshape(resolution, resolution)
    xs = np.asarray([r[0] for r in rows]).reshape(resolution, resolution)
    ys = np.asarray([r[1] for r in rows]).reshape(resolution, resolution)

    cmap = plt.get_cmap("tab20", max(n, 1))
    colors = np.ones((resolution, resolution, 3))
    for c in range(n):
        colors[idx == c] = cmap(c % 20)[:3]

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(
        colors,
        origin="lower",
        extent=(xs.min(), xs.max(), ys.min(), ys.max()),
        aspect="auto",
        interpolation="nearest",
    )
    ax.set_xlabel(f"feature {dims[0]}")
    ax.set_ylabel(f"feature {dims[1]}")
    ax.set_title("decision regions (white = rejected)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_fusion_figure(results, path: str, top: int = 15) -> None:
    """Bar chart of the best ensemble combinations."""
    shown = results[:top]
    fig, ax = plt.subplots(figsize=(7, max(2.5, 0.35 * len(shown) + 1.5)))
    names = ["+".join(r.member_ids) for r in shown]
    ax.barh(range(len(shown)), [r.na for r in shown], color="steelblue")
    ax.set_yticks(range(len(shown)), names, fontsize=6)
    ax.invert_yaxis()
    ax.set_xlabel("ensemble NA")
    ax.set_xlim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

"""File-only figures. Every PNG is written next to the CSV it was drawn from."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import labels as L  # noqa: E402
from .metrics import ConfusionMatrix, confusion_csv  # noqa: E402

# No software/date tags, so identical data gives identical bytes.
_PNG_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def _heatmap(ax, data, xlabels, ylabels, fmt):
    im = ax.imshow(data, cmap="viridis", vmin=0.0, vmax=max(1.0, float(np.nanmax(data))))
    ax.set_xticks(range(len(xlabels)), xlabels, rotation=45, ha="right")
    ax.set_yticks(range(len(ylabels)), ylabels)
    for i in range(data.shape[0]):
        for j in range(data.shape[1]):
            v = data[i, j]
            if np.isfinite(v):
                ax.text(j, i, fmt.format(v), ha="center", va="center",
                        color="white" if v < 0.5 else "black", fontsize=8)
    return im


def confusion_figure(cm: ConfusionMatrix, png_path, csv_path=None):
    """Row-normalised confusion matrix; the CSV keeps raw counts."""
    png_path = Path(png_path)
    csv_path = Path(csv_path) if csv_path else png_path.with_suffix(".csv")
    csv_path.write_text(confusion_csv(cm))
    names = list(L.CLASSES[: cm.counts.shape[0]])
    fig, ax = plt.subplots(figsize=(6, 5))
    im = _heatmap(ax, cm.normalized(), names, names, "{:.2f}")
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    _save(fig, png_path)
    return png_path, csv_path


def sweep_figure(windows_s, ranges_cm, scores, png_path, csv_path=None):
    """Macro-F1 heatmap, window length (rows) against sensing range (columns)."""
    scores = np.asarray(scores, dtype=np.float64)
    png_path = Path(png_path)
    csv_path = Path(csv_path) if csv_path else png_path.with_suffix(".csv")
    lines = ["window_s," + ",".join(f"{r:g}cm" for r in ranges_cm)]
    for w, row in zip(windows_s, scores):
        lines.append(f"{w:g}," + ",".join(f"{v:.6f}" for v in row))
    csv_path.write_text("\n".join(lines) + "\n")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    im = _heatmap(ax, scores, [f"{r:g} cm" for r in ranges_cm], [f"{w:g} s" for w in windows_s],
                  "{:.3f}")
    ax.set_xlabel("sensing range")
    ax.set_ylabel("window length")
    fig.colorbar(im, ax=ax, label="macro-F1")
    fig.tight_layout()
    _save(fig, png_path)
    return png_path, csv_path

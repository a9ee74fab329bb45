"""Figure rendering for the report paths.

Every reporting command writes its delimited output (CSV/JSON) and a
matplotlib rendering next to it. The reconstruction grid is assembled
pixel-exactly in numpy so panels can be compared programmatically.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from .evaluate import FORCE_AXES, CorrelationResult, EvalReport

GRID_COLUMNS = ("target", "self", "cross", "diff")


def correlation_heatmap(result: CorrelationResult, path: str | Path) -> None:
    """Annotated heat map of the pooled latent-force Pearson matrix."""
    fig, ax = plt.subplots(figsize=(4.6, 5.2))
    im = ax.imshow(result.pooled, vmin=-1.0, vmax=1.0, cmap="RdBu_r")
    ax.set_xticks(range(3), [a.replace("f", "F") for a in FORCE_AXES])
    ax.set_yticks(range(result.pooled.shape[0]),
                  [f"z{i}" for i in range(result.pooled.shape[0])])
    for i in range(result.pooled.shape[0]):
        for j in range(result.pooled.shape[1]):
            r = result.pooled[i, j]
            sd = result.sd[i, j]
            text = "n/a" if np.isnan(r) else f"{r:.2f}\n±{sd:.2f}"
            ax.text(j, i, text, ha="center", va="center", fontsize=8)
    ax.set_title(f"latent-force correlation (n={result.n})")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def loss_curves(history: list[dict], path: str | Path) -> None:
    """Per-step loss components on a log scale."""
    steps = [row["step"] for row in history]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for key in ("total", "recon", "kl", "eq"):
        ax.plot(steps, [row[key] for row in history], label=key, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def eval_report_figure(report: EvalReport, path: str | Path) -> None:
    """Per-axis R^2 and MAE bars for one zero-shot evaluation."""
    fig, axes = plt.subplots(1, 2, figsize=(7.2, 3.2))
    xs = np.arange(3)
    labels = [a.replace("f", "F") for a in FORCE_AXES]
    axes[0].bar(xs, [report.r2[a] for a in FORCE_AXES], color="#4878d0")
    axes[0].axhline(0.0, color="k", linewidth=0.8)
    axes[0].set_xticks(xs, labels)
    axes[0].set_title("R²")
    axes[1].bar(xs, [report.mae[a] for a in FORCE_AXES], color="#d65f5f")
    axes[1].set_xticks(xs, labels)
    axes[1].set_title("MAE (N)")
    fig.suptitle(f"{report.source} → {report.target}  (n={report.n})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def to_panel(image: np.ndarray) -> np.ndarray:
    """Float [0, 1] or uint8 image -> uint8 panel."""
    arr = np.asarray(image)
    if arr.ndim == 3:
        arr = arr.squeeze(0)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    return arr


def reconstruction_grid(target_left: np.ndarray, self_left: np.ndarray,
                        cross_left: np.ndarray, target_right: np.ndarray,
                        self_right: np.ndarray, cross_right: np.ndarray) -> np.ndarray:
    """2x4 panel grid: per finger, target / self / cross / |cross - target|.

    Rows are (left, right); all panels share one size, so panel (r, c) of
    the output sits at ``grid[r*H:(r+1)*H, c*W:(c+1)*W]``.
    """
    rows = []
    for target, own, cross in ((target_left, self_left, cross_left),
                               (target_right, self_right, cross_right)):
        t, s, c = to_panel(target), to_panel(own), to_panel(cross)
        if not (t.shape == s.shape == c.shape):
            raise ValueError("grid panels must share one image size")
        diff = np.abs(c.astype(np.int16) - t.astype(np.int16)).astype(np.uint8)
        rows.append(np.concatenate([t, s, c, diff], axis=1))
    return np.concatenate(rows, axis=0)


def grid_panel(grid: np.ndarray, row: int, column: str) -> np.ndarray:
    """Extract one panel from a reconstruction grid."""
    h = grid.shape[0] // 2
    w = grid.shape[1] // len(GRID_COLUMNS)
    c = GRID_COLUMNS.index(column)
    return grid[row * h:(row + 1) * h, c * w:(c + 1) * w]


def save_grid(grid: np.ndarray, path: str | Path) -> None:
    Image.fromarray(grid, mode="L").save(Path(path), format="PNG")

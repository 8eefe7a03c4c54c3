"""Report figures written next to the CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Circle, Rectangle  # noqa: E402

from . import rink  # noqa: E402

RINK_FIGSIZE = (8.0, 3.6)

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "savefig.dpi": 120,
    "savefig.bbox": "tight",
}


def draw_rink(ax, lines: bool = True):
    ax.add_patch(Rectangle((0, 0), rink.RINK_LENGTH, rink.RINK_WIDTH, fill=False, lw=1.2, color="k"))
    if lines:
        ax.axvline(rink.CENTER_LINE, color="tab:red", lw=1.5)
        for b in rink.BLUE_LINES:
            ax.axvline(b, color="tab:blue", lw=2.0)
        for g in rink.GOAL_LINES:
            ax.axvline(g, color="tab:red", lw=0.6)
        for s in rink.faceoff_spots():
            ax.add_patch(Circle(s.as_tuple(), 1.0, color="tab:red"))
    ax.set_xlim(-2, rink.RINK_LENGTH + 2)
    ax.set_ylim(-2, rink.RINK_WIDTH + 2)
    ax.set_aspect("equal")
    ax.set_xlabel("w [ft]")
    ax.set_ylabel("h [ft]")
    return ax


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_phi_curves(ts: Sequence[float], curves: Dict[str, Sequence[float]], path, title: Optional[str] = None):
    """Accuracy-vs-tolerance curves, one line per axis."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for label, ys in curves.items():
            ax.plot(ts, [100.0 * y for y in ys], label=label)
        ax.set_xlabel("tolerance t [ft]")
        ax.set_ylabel(r"$\phi(t)$ [%]")
        ax.set_ylim(0, 101)
        ax.grid(alpha=0.3)
        ax.legend(loc="lower right")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_zone_accuracy(zone_reports: Dict[str, dict], path):
    """One rink panel per partition, each cell annotated with its accuracy."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(zone_reports), 1, figsize=(RINK_FIGSIZE[0], RINK_FIGSIZE[1] * len(zone_reports)),
                                 layout="constrained")
        axes = [axes] if len(zone_reports) == 1 else list(axes)
        for ax, (name, report) in zip(axes, zone_reports.items()):
            partition = rink.get_partition(name)
            draw_rink(ax, lines=False)
            for cell, label in zip(partition.bands, partition.labels):
                ax.add_patch(Rectangle((cell.w0, cell.h0), cell.w1 - cell.w0, cell.h1 - cell.h0, fill=False, lw=0.8))
                acc = report["per_zone"].get(label)
                text = "n/a" if acc is None else f"{acc:.1f}%"
                ax.text((cell.w0 + cell.w1) / 2, (cell.h0 + cell.h1) / 2, text, ha="center", va="center")
            ax.set_title(f"{name}: overall {report['overall']:.1f}%")
        return _save(fig, path)


def plot_trajectory(points: Sequence, path, gt_track: Optional[Sequence] = None, title: Optional[str] = None):
    """Predicted per-window locations on the rink, optionally over the true puck track."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=RINK_FIGSIZE)
        draw_rink(ax)
        if gt_track:
            ax.plot([p[0] for p in gt_track], [p[1] for p in gt_track], color="0.6", lw=0.8, label="true")
        ws = [p.location.w for p in points]
        hs = [p.location.h for p in points]
        ax.plot(ws, hs, "-o", color="k", ms=3, lw=1, label="predicted")
        for p in points:
            ax.annotate(str(p.window_index), (p.location.w, p.location.h), fontsize=6, xytext=(2, 2),
                        textcoords="offset points")
        ax.legend(loc="upper right")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_training_log(rows: Sequence[dict], path: Union[str, Path]):
    with plt.rc_context(STYLE):
        fig, (ax_l, ax_v) = plt.subplots(1, 2, figsize=(8.0, 3.0))
        it = [r["iter"] for r in rows]
        for key in ("L_w", "L_h", "L_e", "L_multi"):
            ys = [r.get(key) for r in rows]
            if any(y is not None for y in ys):
                ax_l.plot(it, [float("nan") if y is None else y for y in ys], label=key, lw=0.8)
        ax_l.set_yscale("log")
        ax_l.set_xlabel("iteration")
        ax_l.set_ylabel("loss")
        ax_l.legend()
        for key in ("val_AUC", "val_F1"):
            pts = [(r["iter"], r[key]) for r in rows if r.get(key) is not None]
            if pts:
                ax_v.plot(*zip(*pts), "-o", ms=3, label=key)
        ax_v.set_xlabel("iteration")
        ax_v.set_ylabel("validation [%]")
        ax_v.legend()
        return _save(fig, path)

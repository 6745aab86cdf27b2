"""Matplotlib figures written next to the delimited report files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scene import FloorPlan, SceneLayout, footprint

_PNG_META = {"Software": "layoutdiff"}

_CLASS_COLORS = (
    "#4878cf", "#ee854a", "#6acc65", "#d65f5f", "#956cb4",
    "#8c613c", "#dc7ec0", "#797979", "#d5bb67", "#82c6e2",
)


def class_color(class_id: int) -> str:
    return _CLASS_COLORS[class_id % len(_CLASS_COLORS)]


def _save(fig, path: str | Path) -> None:
    fig.savefig(Path(path), metadata=_PNG_META)
    plt.close(fig)


def save_loss_curve(rows: list[tuple[int, float]], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4), dpi=120)
    epochs = [r[0] for r in rows]
    losses = [r[1] for r in rows]
    ax.plot(epochs, losses, marker="o", ms=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def save_ratio_trace(traces: dict[str, list[dict]], tau: float, path: str | Path) -> None:
    """One walkable-ratio line per optimized scene."""
    fig, ax = plt.subplots(figsize=(6, 4), dpi=120)
    for name, rows in sorted(traces.items()):
        ax.plot([r["iter"] for r in rows], [r["ratio"] for r in rows], alpha=0.7, label=name)
    ax.axhline(tau, color="k", ls="--", lw=1, label=f"target {tau:.2f}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("walkable ratio")
    ax.grid(True, alpha=0.3)
    if len(traces) <= 8:
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def save_walkable_sr(sr: dict[float, float], path: str | Path, baseline: dict[float, float] | None = None) -> None:
    fig, ax = plt.subplots(figsize=(6, 4), dpi=120)
    taus = sorted(sr)
    ax.plot(taus, [sr[t] for t in taus], marker="o", label="corpus")
    if baseline:
        base_taus = sorted(baseline)
        ax.plot(base_taus, [baseline[t] for t in base_taus], marker="s", ls="--", label="baseline")
        ax.legend()
    ax.set_xlabel("walkable-ratio threshold")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def save_metric_bars(rows: list[tuple[str, float]], path: str | Path) -> None:
    """Bar chart of the bounded scalar metrics from a report."""
    keep = [(k, v) for k, v in rows if k != "n_scenes" and not k.startswith("sr_")]
    fig, ax = plt.subplots(figsize=(6, 4), dpi=120)
    names = [k for k, _ in keep]
    values = [v for _, v in keep]
    ax.barh(np.arange(len(keep)), values, color="#4878cf")
    ax.set_yticks(np.arange(len(keep)), names, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("value")
    ax.grid(True, axis="x", alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def save_floorplan_figure(plan: FloorPlan, path: str | Path, scene: SceneLayout | None = None) -> None:
    fig, ax = plt.subplots(figsize=(6, 6), dpi=120)
    for room in plan.rooms:
        poly = np.vstack([room.polygon, room.polygon[:1]])
        ax.fill(poly[:, 0], poly[:, 1], facecolor="#f4f1ea", edgecolor="#333333", lw=1.2)
        cx, cy = room.polygon.mean(axis=0)
        ax.text(cx, cy, room.room_type, ha="center", va="center", fontsize=8, color="#555555")
    if scene is not None:
        for slot in scene.slots:
            if not slot.occupied:
                continue
            (x0, y0, x1, y1), _ = footprint(slot)
            ax.add_patch(
                plt.Rectangle((x0, y0), x1 - x0, y1 - y0, facecolor=class_color(slot.class_id), alpha=0.75, edgecolor="k", lw=0.6)
            )
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    fig.tight_layout()
    _save(fig, path)

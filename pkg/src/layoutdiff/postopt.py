"""Walkable-ratio computation and the size-preserving replacement optimizer.

The optimizer trades oversized objects for smaller same-class catalog assets
until the walkable ratio clears its threshold. Placements never move and the
object count never changes; failure to reach the threshold is a normal,
reported outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .raster import floor_mask, footprint_mask, make_grid
from .scene import (
    AssetCatalog,
    FloorPlan,
    NoCandidateError,
    ObjectSlot,
    SceneLayout,
    footprint,
    nearest_asset,
)


class FloorAreaError(ValueError):
    """Floor plan has no usable area."""


@dataclass(frozen=True)
class WalkableConfig:
    tau: float = 0.8
    max_iters: int = 20
    top_k: int = 3
    raster_cell: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.raster_cell <= 0.0:
            raise ValueError("raster_cell must be positive")


def walkable_ratio_naive(scene: SceneLayout, plan: FloorPlan) -> float:
    """(room area - sum of occupied footprint areas) / room area.

    Footprints are summed independently, so heavily overlapping objects are
    double-counted and the ratio can go below zero.
    """
    area = plan.total_area
    if area <= 0.0:
        raise FloorAreaError("floor plan has zero area")
    covered = sum(footprint(slot)[1] for slot in scene.slots if slot.occupied)
    return (area - covered) / area


def walkable_ratio_raster(scene: SceneLayout, plan: FloorPlan, cell: float = 0.05) -> float:
    """Fraction of in-room grid cells not covered by any footprint; converges
    to the exact union-corrected ratio as the cell size shrinks."""
    if plan.total_area <= 0.0:
        raise FloorAreaError("floor plan has zero area")
    grid = make_grid(plan, cell)
    floor = floor_mask(plan, grid)
    n_floor = int(floor.sum())
    if n_floor == 0:
        raise FloorAreaError("floor plan rasterized to zero cells")
    covered = footprint_mask(scene, grid)
    return float((floor & ~covered).sum()) / n_floor


@dataclass
class OptimizeResult:
    scene: SceneLayout
    iterations: int
    final_ratio: float
    status: str  # "reached" | "no_replacement" | "max_iters"
    trace: list[dict] = field(default_factory=list)


def optimize_walkable(
    scene: SceneLayout,
    plan: FloorPlan,
    catalog: AssetCatalog,
    cfg: WalkableConfig,
    record_raster: bool = False,
) -> OptimizeResult:
    """Iteratively swap the largest objects for smaller same-class assets
    until the walkable ratio reaches ``cfg.tau``.

    Each iteration sorts the valid slots (occupied, class present in the
    catalog) by footprint area descending and tries the top k; a replacement
    adopts the catalog asset's size and latent while keeping location and
    yaw. A full pass with no replacement terminates early.
    """
    slots = list(scene.slots)
    ratio = walkable_ratio_naive(scene, plan)
    trace = [_trace_row(scene, plan, 0, ratio, 0, cfg, record_raster)]
    iterations = 0
    status = "reached" if ratio >= cfg.tau else "max_iters"

    while ratio < cfg.tau and iterations < cfg.max_iters:
        iterations += 1
        current = SceneLayout(slots=tuple(slots), floorplan_id=scene.floorplan_id, seed=scene.seed)
        valid = [
            (i, footprint(slots[i])[1])
            for i in current.occupied_indices()
            if catalog.records_of_class(slots[i].class_id)
        ]
        valid.sort(key=lambda p: (-p[1], p[0]))

        replacements = 0
        for idx, area in valid[: cfg.top_k]:
            slot = slots[idx]
            try:
                record = nearest_asset(
                    catalog, slot.latent, class_id=slot.class_id, size_cap=area, yaw=slot.yaw
                )
            except NoCandidateError:
                continue
            slots[idx] = replace(slot, size=record.half_extents.copy(), latent=record.latent.copy())
            replacements += 1

        current = SceneLayout(slots=tuple(slots), floorplan_id=scene.floorplan_id, seed=scene.seed)
        ratio = walkable_ratio_naive(current, plan)
        trace.append(_trace_row(current, plan, iterations, ratio, replacements, cfg, record_raster))
        if replacements == 0:
            status = "no_replacement"
            break
        if ratio >= cfg.tau:
            status = "reached"
            break
    else:
        status = "reached" if ratio >= cfg.tau else status

    final = SceneLayout(slots=tuple(slots), floorplan_id=scene.floorplan_id, seed=scene.seed)
    return OptimizeResult(scene=final, iterations=iterations, final_ratio=ratio, status=status, trace=trace)


def _trace_row(
    scene: SceneLayout,
    plan: FloorPlan,
    iteration: int,
    ratio: float,
    replacements: int,
    cfg: WalkableConfig,
    record_raster: bool,
) -> dict:
    row = {"iter": iteration, "ratio": ratio, "replacements": replacements}
    if record_raster:
        row["raster_ratio"] = walkable_ratio_raster(scene, plan, cfg.raster_cell)
    return row

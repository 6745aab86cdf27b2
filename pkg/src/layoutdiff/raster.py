"""Grid rasterization of floor plans and object footprints."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import points_in_polygon
from .scene import FloorPlan, SceneLayout, footprint


@dataclass(frozen=True)
class Grid:
    """Cell-center raster over a floor plan's bounding box."""

    origin_x: float
    origin_y: float
    cell: float
    nx: int
    ny: int

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.origin_x + (np.arange(self.nx) + 0.5) * self.cell
        ys = self.origin_y + (np.arange(self.ny) + 0.5) * self.cell
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        return gx, gy


def make_grid(plan: FloorPlan, cell: float) -> Grid:
    if cell <= 0:
        raise ValueError("cell size must be positive")
    x0, y0, x1, y1 = plan.bbox
    nx = max(1, int(np.ceil((x1 - x0) / cell - 1e-9)))
    ny = max(1, int(np.ceil((y1 - y0) / cell - 1e-9)))
    return Grid(origin_x=x0, origin_y=y0, cell=cell, nx=nx, ny=ny)


def floor_mask(plan: FloorPlan, grid: Grid) -> np.ndarray:
    """Boolean (ny, nx) mask of cells whose centers fall inside any room."""
    gx, gy = grid.centers()
    mask = np.zeros((grid.ny, grid.nx), dtype=bool)
    for room in plan.rooms:
        mask |= points_in_polygon(gx, gy, room.polygon)
    return mask


def rect_mask(rect: tuple[float, float, float, float], grid: Grid) -> np.ndarray:
    """Cells whose centers fall inside an axis-aligned rectangle."""
    gx, gy = grid.centers()
    x0, y0, x1, y1 = rect
    return (gx >= x0) & (gx <= x1) & (gy >= y0) & (gy <= y1)


def footprint_mask(scene: SceneLayout, grid: Grid) -> np.ndarray:
    """Union of the occupied slots' footprint rectangles on the grid."""
    mask = np.zeros((grid.ny, grid.nx), dtype=bool)
    for slot in scene.slots:
        if not slot.occupied:
            continue
        rect, _ = footprint(slot)
        mask |= rect_mask(rect, grid)
    return mask

"""Top-down SVG rendering of a scene on its floor plan."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from .figures import class_color
from .raster import floor_mask, footprint_mask, make_grid
from .scene import AssetCatalog, FloorPlan, SceneLayout, footprint, functional_extension, resolve_assets

SCALE = 100.0  # px per meter
MARGIN = 0.5  # meters of padding around the plan


class SvgError(ValueError):
    """Geometry cannot be rendered."""


def scene_svg(
    scene: SceneLayout | None,
    plan: FloorPlan,
    catalog: AssetCatalog | None = None,
    shade_walkable: bool = False,
    walkable_cell: float = 0.1,
) -> str:
    """Orthographic SVG: room polygons, class-colored object rectangles,
    dashed articulation extensions (when a catalog resolves them), and an
    optional walkable-cell shading layer."""
    x0, y0, x1, y1 = plan.bbox
    if not (x1 > x0 and y1 > y0):
        raise SvgError("floor plan bounding box is degenerate")
    width = (x1 - x0 + 2 * MARGIN) * SCALE
    height = (y1 - y0 + 2 * MARGIN) * SCALE

    def px(x: float) -> float:
        return round((x - x0 + MARGIN) * SCALE, 2)

    def py(y: float) -> float:
        # SVG y grows downward; world y grows upward.
        return round((y1 - y + MARGIN) * SCALE, 2)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.2f} {height:.2f}">',
        f'<rect x="0" y="0" width="{width:.2f}" height="{height:.2f}" fill="#ffffff"/>',
    ]

    for room in plan.rooms:
        points = " ".join(f"{px(x)},{py(y)}" for x, y in room.polygon)
        parts.append(f'<polygon points="{points}" fill="#f4f1ea" stroke="#333333" stroke-width="2"/>')
        cx, cy = room.polygon.mean(axis=0)
        parts.append(
            f'<text x="{px(cx)}" y="{py(cy)}" font-size="12" fill="#888888" '
            f'text-anchor="middle">{escape(room.room_type)}</text>'
        )

    if shade_walkable and scene is not None:
        grid = make_grid(plan, walkable_cell)
        free = floor_mask(plan, grid) & ~footprint_mask(scene, grid)
        parts.append('<g fill="#bfe3bf" fill-opacity="0.5">')
        ys, xs = free.nonzero()
        for iy, ix in zip(ys.tolist(), xs.tolist()):
            cell_x = grid.origin_x + ix * grid.cell
            cell_y = grid.origin_y + (iy + 1) * grid.cell
            parts.append(
                f'<rect x="{px(cell_x)}" y="{py(cell_y)}" '
                f'width="{grid.cell * SCALE:.2f}" height="{grid.cell * SCALE:.2f}"/>'
            )
        parts.append("</g>")

    if scene is not None:
        records = resolve_assets(scene, catalog) if catalog is not None else [None] * scene.n_max
        for slot, record in zip(scene.slots, records):
            if not slot.occupied:
                continue
            spec = record.articulation if record is not None else None
            if spec is not None and spec.extension_depth > 0:
                box = functional_extension(slot, spec)
                parts.append(
                    f'<rect x="{px(float(box.lo[0]))}" y="{py(float(box.hi[1]))}" '
                    f'width="{(float(box.hi[0]) - float(box.lo[0])) * SCALE:.2f}" '
                    f'height="{(float(box.hi[1]) - float(box.lo[1])) * SCALE:.2f}" '
                    f'fill="none" stroke="#b03030" stroke-width="1.5" stroke-dasharray="6,4"/>'
                )
            (fx0, fy0, fx1, fy1), _ = footprint(slot)
            color = class_color(slot.class_id)
            parts.append(
                f'<rect x="{px(fx0)}" y="{py(fy1)}" width="{(fx1 - fx0) * SCALE:.2f}" '
                f'height="{(fy1 - fy0) * SCALE:.2f}" fill="{color}" fill-opacity="0.8" '
                f'stroke="#222222" stroke-width="1"/>'
            )

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def save_scene_svg(
    scene: SceneLayout | None,
    plan: FloorPlan,
    path: str | Path,
    catalog: AssetCatalog | None = None,
    shade_walkable: bool = False,
) -> None:
    Path(path).write_text(scene_svg(scene, plan, catalog=catalog, shade_walkable=shade_walkable), encoding="utf-8")

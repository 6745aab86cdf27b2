"""Synthetic asset catalog and rule-based training scenes.

Stands in for large furniture/articulation datasets at desk scale. Every
generated value is a deterministic function of the seeds involved: catalog
latents hash the asset id, scene placement flows from one generator.

Placement rules: each scene picks a room, draws assets uniformly from the
catalog, orients them at right angles, and rejection-samples non-overlapping
positions inside the room; slots left over stay canonically empty. Within a
class the size ladder keeps articulation depth proportional to the body, so
swapping an asset for a smaller one never deepens its extension.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .floorplan import FloorplanParams, generate_floorplan
from .geometry import points_in_polygon
from .scene import (
    ArticulationSpec,
    AssetCatalog,
    AssetRecord,
    FloorPlan,
    ObjectSlot,
    Room,
    SceneLayout,
    empty_slot,
    footprint,
)

DEFAULT_LATENT_DIM = 8

# (class name, base half-extents, articulation axis or None, depth per meter
# of the axis-aligned body extent along that axis)
_CLASS_SPECS = [
    ("cabinet", (0.45, 0.25, 0.45), (1.0, 0.0, 0.0), 1.6),
    ("wardrobe", (0.60, 0.30, 1.00), (0.0, 1.0, 0.0), 1.6),
    ("table", (0.70, 0.45, 0.38), None, 0.0),
    ("chair", (0.25, 0.25, 0.45), None, 0.0),
]

_SIZE_LADDER = (0.55, 0.70, 0.85, 1.00, 1.15)


def _stable_latent(asset_id: str, dim: int) -> np.ndarray:
    digest = hashlib.sha256(asset_id.encode()).digest()
    seed = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(seed).normal(0.0, 1.0, size=dim)


def synthetic_catalog(latent_dim: int = DEFAULT_LATENT_DIM) -> AssetCatalog:
    """Four furniture classes, five sizes each; cabinets and wardrobes carry
    prismatic articulations whose depth scales with the body."""
    classes = tuple(name for name, _, _, _ in _CLASS_SPECS)
    assets = []
    for class_id, (name, base, axis, depth_per_m) in enumerate(_CLASS_SPECS):
        for step, scale in enumerate(_SIZE_LADDER):
            asset_id = f"{name}-{step}"
            half = np.array(base) * scale
            articulation = None
            if axis is not None:
                axis_vec = np.array(axis)
                along = float(np.abs(axis_vec) @ half)
                articulation = ArticulationSpec(axis=axis_vec, extension_depth=depth_per_m * along)
            assets.append(
                AssetRecord(
                    asset_id=asset_id,
                    class_id=class_id,
                    half_extents=half,
                    latent=_stable_latent(asset_id, latent_dim),
                    articulation=articulation,
                )
            )
    return AssetCatalog(classes=classes, assets=tuple(assets))


def single_room_plan(side: float = 5.0, room_type: str = "living", plan_id: str = "toyroom") -> FloorPlan:
    polygon = np.array([[0.0, 0.0], [side, 0.0], [side, side], [0.0, side]])
    return FloorPlan(plan_id=plan_id, rooms=(Room(room_id="r0", room_type=room_type, polygon=polygon),), doors=())


def _rects_overlap(a, b) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


def synthetic_scene(
    plan: FloorPlan,
    catalog: AssetCatalog,
    n_max: int,
    rng: np.random.Generator,
    n_objects: int | None = None,
    seed: int = 0,
) -> SceneLayout:
    """Place up to ``n_objects`` catalog assets without overlap."""
    if n_objects is None:
        n_objects = int(rng.integers(max(1, n_max // 2), n_max + 1))
    n_objects = min(n_objects, n_max)
    n_classes = catalog.n_classes
    latent_dim = catalog.latent_dim

    placed_rects: list[tuple[float, float, float, float]] = []
    slots: list[ObjectSlot] = []
    for _ in range(n_objects):
        room = plan.rooms[int(rng.integers(0, len(plan.rooms)))]
        asset = catalog.assets[int(rng.integers(0, len(catalog.assets)))]
        yaw = float(rng.choice([0.0, np.pi / 2, -np.pi / 2, -np.pi]))
        slot = None
        rx0, ry0 = room.polygon.min(axis=0)
        rx1, ry1 = room.polygon.max(axis=0)
        for _ in range(40):
            hx, hy = (
                abs(asset.half_extents[0] * np.cos(yaw)) + abs(asset.half_extents[1] * np.sin(yaw)),
                abs(asset.half_extents[0] * np.sin(yaw)) + abs(asset.half_extents[1] * np.cos(yaw)),
            )
            if rx1 - rx0 < 2 * hx or ry1 - ry0 < 2 * hy:
                break
            cx = float(rng.uniform(rx0 + hx, rx1 - hx))
            cy = float(rng.uniform(ry0 + hy, ry1 - hy))
            if not points_in_polygon(np.array([cx]), np.array([cy]), room.polygon)[0]:
                continue
            candidate = ObjectSlot(
                location=np.array([cx, cy, float(asset.half_extents[2])]),
                size=asset.half_extents.copy(),
                yaw=yaw,
                class_logits=_logits_for(asset.class_id, n_classes, rng),
                latent=asset.latent.copy(),
            )
            rect, _ = footprint(candidate)
            if any(_rects_overlap(rect, other) for other in placed_rects):
                continue
            slot = candidate
            placed_rects.append(rect)
            break
        if slot is not None:
            slots.append(slot)

    while len(slots) < n_max:
        slots.append(empty_slot(plan, n_classes, latent_dim))
    order = rng.permutation(n_max)
    slots = [slots[i] for i in order]
    return SceneLayout(slots=tuple(slots), floorplan_id=plan.plan_id, seed=seed)


def _logits_for(class_id: int, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    logits = rng.normal(-3.0, 0.1, size=n_classes + 1)
    logits[class_id] = 3.0 + rng.normal(0.0, 0.1)
    return logits


def synthetic_corpus(
    catalog: AssetCatalog,
    n_scenes: int,
    n_max: int,
    seed: int,
    plan_prompt_params: FloorplanParams | None = None,
    n_plans: int = 4,
) -> tuple[list[SceneLayout], list[FloorPlan]]:
    """Training corpus: a few annealed plans, cycled, each filled with
    rule-based placements."""
    if plan_prompt_params is None:
        plan_prompt_params = FloorplanParams(
            total_area=60.0,
            room_specs=(("living", 0.4), ("bedroom", 0.35), ("kitchen", 0.25)),
            required_adjacencies=(("kitchen", "living"),),
        )
    plans = [generate_floorplan(plan_prompt_params, seed=seed + i)[0] for i in range(n_plans)]
    rng = np.random.default_rng(seed)
    scenes = []
    plan_refs = []
    for i in range(n_scenes):
        plan = plans[i % n_plans]
        scenes.append(synthetic_scene(plan, catalog, n_max, rng, seed=seed + i))
        plan_refs.append(plan)
    return scenes, plan_refs

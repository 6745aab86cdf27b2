"""Scene, floor-plan and asset-catalog data model plus the geometry queries on it.

All types are immutable values after construction and every operation here is
a pure function, so everything in this module is safe to share across worker
processes or threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry import (
    Box3,
    aabb_of_oriented,
    extend_box,
    polygon_area,
    polygon_is_simple,
    rotated_half_extents,
    yaw_rotate,
)

# Size assigned to the geometry channels of an unoccupied slot so the
# diffusion state stays fixed-dimensional and log-encodable.
EMPTY_SLOT_SIZE = 1e-3

# Room-type vocabulary used by floor plans, conditioning features and the
# prompt parser. Fixed order: the conditioning histogram indexes into it.
ROOM_TYPES = (
    "living",
    "bedroom",
    "kitchen",
    "bathroom",
    "dining",
    "office",
    "hallway",
    "balcony",
)


class SceneError(ValueError):
    """Invalid scene, floor plan or catalog data."""


class NoCandidateError(LookupError):
    """Asset query matched no record after filtering."""


@dataclass(frozen=True)
class ArticulationSpec:
    """Primary articulation of an asset: unit axis in the object frame plus
    the depth its movable part sweeps outward along that axis."""

    axis: np.ndarray
    extension_depth: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        if axis.shape != (3,):
            raise SceneError("articulation axis must be a 3-vector")
        norm = float(np.linalg.norm(axis))
        if not math.isfinite(norm) or norm <= 0.0:
            raise SceneError("articulation axis must be non-zero")
        object.__setattr__(self, "axis", axis / norm)
        depth = float(self.extension_depth)
        if not math.isfinite(depth) or depth < 0.0:
            raise SceneError("extension depth must be finite and >= 0")
        object.__setattr__(self, "extension_depth", depth)

    def key(self) -> tuple:
        return (round(self.axis[0], 9), round(self.axis[1], 9), round(self.axis[2], 9), round(self.extension_depth, 9))


@dataclass(frozen=True)
class ObjectSlot:
    """One of the N_max object slots: oriented box plus semantics.

    ``class_logits`` has one channel per catalog class plus a trailing
    "empty" channel; a slot is occupied iff the empty channel does not win
    the argmax.
    """

    location: np.ndarray
    size: np.ndarray
    yaw: float
    class_logits: np.ndarray
    latent: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "location", np.asarray(self.location, dtype=float))
        object.__setattr__(self, "size", np.asarray(self.size, dtype=float))
        object.__setattr__(self, "class_logits", np.asarray(self.class_logits, dtype=float))
        object.__setattr__(self, "latent", np.asarray(self.latent, dtype=float))
        if self.location.shape != (3,) or self.size.shape != (3,):
            raise SceneError("location and size must be 3-vectors")
        if not np.all(np.isfinite(self.class_logits)):
            raise SceneError("class logits must be finite")
        if np.any(self.size <= 0.0):
            raise SceneError("slot size components must be strictly positive")

    @property
    def occupied(self) -> bool:
        return int(np.argmax(self.class_logits)) != len(self.class_logits) - 1

    @property
    def class_id(self) -> int:
        return int(np.argmax(self.class_logits))

    def static_box(self) -> Box3:
        return aabb_of_oriented(self.location, self.size, self.yaw)


@dataclass(frozen=True)
class SceneLayout:
    slots: tuple[ObjectSlot, ...]
    floorplan_id: str
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))

    @property
    def n_max(self) -> int:
        return len(self.slots)

    def occupied_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.slots) if s.occupied]

    def occupied_count(self) -> int:
        return len(self.occupied_indices())


@dataclass(frozen=True)
class Room:
    room_id: str
    room_type: str
    polygon: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "polygon", np.asarray(self.polygon, dtype=float))

    @property
    def area(self) -> float:
        return polygon_area(self.polygon)


@dataclass(frozen=True)
class FloorPlan:
    """Room polygons plus door adjacencies; graph view is (rooms, doors)."""

    plan_id: str
    rooms: tuple[Room, ...]
    doors: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "rooms", tuple(self.rooms))
        object.__setattr__(self, "doors", tuple(tuple(d) for d in self.doors))
        ids = [r.room_id for r in self.rooms]
        if len(set(ids)) != len(ids):
            raise SceneError("duplicate room ids in floor plan")
        for room in self.rooms:
            if len(room.polygon) < 3 or room.area <= 0.0:
                raise SceneError(f"room {room.room_id} polygon is degenerate")
            if not polygon_is_simple(room.polygon):
                raise SceneError(f"room {room.room_id} polygon self-intersects")
        known = set(ids)
        for a, b in self.doors:
            if a not in known or b not in known:
                raise SceneError(f"door ({a}, {b}) references unknown room")

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y) over all room polygons."""
        pts = np.vstack([r.polygon for r in self.rooms])
        return (
            float(pts[:, 0].min()),
            float(pts[:, 1].min()),
            float(pts[:, 0].max()),
            float(pts[:, 1].max()),
        )

    @property
    def total_area(self) -> float:
        return float(sum(r.area for r in self.rooms))

    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bbox
        return (0.5 * (x0 + x1), 0.5 * (y0 + y1))


@dataclass(frozen=True)
class AssetRecord:
    asset_id: str
    class_id: int
    half_extents: np.ndarray
    latent: np.ndarray
    articulation: ArticulationSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=float))
        object.__setattr__(self, "latent", np.asarray(self.latent, dtype=float))
        if np.any(self.half_extents <= 0.0):
            raise SceneError(f"asset {self.asset_id} has non-positive extents")

    def footprint_area(self, yaw: float = 0.0) -> float:
        h = rotated_half_extents(self.half_extents, yaw)
        return float(4.0 * h[0] * h[1])


@dataclass(frozen=True)
class AssetCatalog:
    classes: tuple[str, ...]
    assets: tuple[AssetRecord, ...]
    _by_class: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "assets", tuple(self.assets))
        if self.assets:
            dims = {a.latent.shape for a in self.assets}
            if len(dims) != 1:
                raise SceneError("all catalog latents must share one dimension")
        by_class: dict[int, list[AssetRecord]] = {}
        for rec in self.assets:
            if not 0 <= rec.class_id < len(self.classes):
                raise SceneError(f"asset {rec.asset_id} has unknown class id {rec.class_id}")
            by_class.setdefault(rec.class_id, []).append(rec)
        object.__setattr__(self, "_by_class", by_class)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def latent_dim(self) -> int:
        return int(self.assets[0].latent.shape[0]) if self.assets else 0

    def records_of_class(self, class_id: int) -> list[AssetRecord]:
        return list(self._by_class.get(class_id, []))

    def extent_log_range(self) -> tuple[float, float]:
        """(log min, log max) over every half-extent component in the catalog."""
        if not self.assets:
            raise SceneError("catalog is empty")
        ext = np.concatenate([a.half_extents for a in self.assets])
        return (float(np.log(ext.min())), float(np.log(ext.max())))

    def class_articulation(self, class_id: int) -> ArticulationSpec | None:
        """Representative articulation for a class: the mode over its records
        (None counts as a value); ties broken by smallest asset id."""
        records = self._by_class.get(class_id, [])
        if not records:
            return None
        counts: dict[tuple | None, list[str]] = {}
        specs: dict[tuple | None, ArticulationSpec | None] = {}
        for rec in records:
            key = rec.articulation.key() if rec.articulation is not None else None
            counts.setdefault(key, []).append(rec.asset_id)
            specs[key] = rec.articulation
        best = min(counts.items(), key=lambda kv: (-len(kv[1]), min(kv[1])))
        return specs[best[0]]


def functional_extension(slot: ObjectSlot, spec: ArticulationSpec | None) -> Box3:
    """Extended-state box of a slot: the enclosing AABB of its oriented box,
    swept along the world-space articulation axis when one is given."""
    box = slot.static_box()
    if spec is None:
        return box
    world_axis = yaw_rotate(spec.axis, slot.yaw)
    return extend_box(box, world_axis, spec.extension_depth)


def footprint(slot: ObjectSlot) -> tuple[tuple[float, float, float, float], float]:
    """Ground-plane rectangle (min_x, min_y, max_x, max_y) and its area."""
    box = slot.static_box()
    rect = (float(box.lo[0]), float(box.lo[1]), float(box.hi[0]), float(box.hi[1]))
    area = (rect[2] - rect[0]) * (rect[3] - rect[1])
    return rect, float(area)


def nearest_asset(
    catalog: AssetCatalog,
    latent: np.ndarray,
    class_id: int | None = None,
    size_cap: float | None = None,
    yaw: float = 0.0,
) -> AssetRecord:
    """Record with the smallest Euclidean latent distance among the filtered
    candidates; ties broken by lowest asset id.

    ``size_cap`` is a strict upper bound on the candidate's footprint area,
    evaluated at ``yaw`` (the default measures the unrotated footprint; the
    walkable optimizer passes the slot's yaw so replacements shrink the area
    that actually enters the walkable ratio).
    """
    latent = np.asarray(latent, dtype=float)
    candidates: Iterable[AssetRecord]
    candidates = catalog.assets if class_id is None else catalog.records_of_class(class_id)
    if size_cap is not None:
        candidates = [a for a in candidates if a.footprint_area(yaw) < size_cap]
    else:
        candidates = list(candidates)
    if not candidates:
        raise NoCandidateError("no catalog record passes the filters")
    return min(candidates, key=lambda a: (float(np.linalg.norm(a.latent - latent)), a.asset_id))


def resolve_assets(scene: SceneLayout, catalog: AssetCatalog) -> list[AssetRecord | None]:
    """Best-matching catalog record per slot (None for empty slots and for
    classes with no records). Metrics read articulation from the resolved
    record rather than from a per-class mode."""
    out: list[AssetRecord | None] = []
    for slot in scene.slots:
        if not slot.occupied:
            out.append(None)
            continue
        try:
            out.append(nearest_asset(catalog, slot.latent, class_id=slot.class_id))
        except NoCandidateError:
            out.append(None)
    return out


def empty_slot(floorplan: FloorPlan, n_classes: int, latent_dim: int) -> ObjectSlot:
    """Canonical unoccupied slot: epsilon size at the floor-plan center with
    the empty logit saturated."""
    cx, cy = floorplan.center()
    logits = np.full(n_classes + 1, -4.0)
    logits[-1] = 4.0
    return ObjectSlot(
        location=np.array([cx, cy, 0.0]),
        size=np.full(3, EMPTY_SLOT_SIZE),
        yaw=0.0,
        class_logits=logits,
        latent=np.zeros(latent_dim),
    )


# ---------------------------------------------------------------------------
# JSON interchange


def scene_to_dict(scene: SceneLayout) -> dict:
    return {
        "floorplan_id": scene.floorplan_id,
        "seed": int(scene.seed),
        "slots": [
            {
                "location": [float(v) for v in s.location],
                "size": [float(v) for v in s.size],
                "yaw": float(s.yaw),
                "class_logits": [float(v) for v in s.class_logits],
                "latent": [float(v) for v in s.latent],
            }
            for s in scene.slots
        ],
    }


def scene_from_dict(data: dict) -> SceneLayout:
    slots = tuple(
        ObjectSlot(
            location=np.array(s["location"], dtype=float),
            size=np.array(s["size"], dtype=float),
            yaw=float(s["yaw"]),
            class_logits=np.array(s["class_logits"], dtype=float),
            latent=np.array(s["latent"], dtype=float),
        )
        for s in data["slots"]
    )
    return SceneLayout(slots=slots, floorplan_id=str(data["floorplan_id"]), seed=int(data.get("seed", 0)))


def floorplan_to_dict(plan: FloorPlan) -> dict:
    return {
        "id": plan.plan_id,
        "rooms": [
            {
                "id": r.room_id,
                "type": r.room_type,
                "polygon": [[float(x), float(y)] for x, y in r.polygon],
            }
            for r in plan.rooms
        ],
        "doors": [[a, b] for a, b in plan.doors],
    }


def floorplan_from_dict(data: dict, plan_id: str | None = None) -> FloorPlan:
    rooms = tuple(
        Room(room_id=str(r["id"]), room_type=str(r["type"]), polygon=np.array(r["polygon"], dtype=float))
        for r in data["rooms"]
    )
    doors = tuple((str(a), str(b)) for a, b in data.get("doors", []))
    return FloorPlan(plan_id=plan_id or str(data.get("id", "plan")), rooms=rooms, doors=doors)


def catalog_to_dict(catalog: AssetCatalog) -> dict:
    return {
        "classes": list(catalog.classes),
        "assets": [
            {
                "asset_id": a.asset_id,
                "class_id": int(a.class_id),
                "half_extents": [float(v) for v in a.half_extents],
                "latent": [float(v) for v in a.latent],
                "articulation": None
                if a.articulation is None
                else {
                    "axis": [float(v) for v in a.articulation.axis],
                    "extension_depth": float(a.articulation.extension_depth),
                },
            }
            for a in catalog.assets
        ],
    }


def catalog_from_dict(data: dict) -> AssetCatalog:
    assets = []
    for a in data["assets"]:
        art = a.get("articulation")
        spec = None
        if art is not None:
            spec = ArticulationSpec(axis=np.array(art["axis"], dtype=float), extension_depth=float(art["extension_depth"]))
        assets.append(
            AssetRecord(
                asset_id=str(a["asset_id"]),
                class_id=int(a["class_id"]),
                half_extents=np.array(a["half_extents"], dtype=float),
                latent=np.array(a["latent"], dtype=float),
                articulation=spec,
            )
        )
    return AssetCatalog(classes=tuple(data["classes"]), assets=tuple(assets))


def dump_json(data: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def load_scene(path: str | Path) -> SceneLayout:
    return scene_from_dict(load_json(path))


def save_scene(scene: SceneLayout, path: str | Path) -> None:
    dump_json(scene_to_dict(scene), path)


def load_floorplan(path: str | Path) -> FloorPlan:
    return floorplan_from_dict(load_json(path), plan_id=Path(path).stem)


def save_floorplan(plan: FloorPlan, path: str | Path) -> None:
    dump_json(floorplan_to_dict(plan), path)


def load_catalog(path: str | Path) -> AssetCatalog:
    return catalog_from_dict(load_json(path))


def save_catalog(catalog: AssetCatalog, path: str | Path) -> None:
    dump_json(catalog_to_dict(catalog), path)


def load_floorplans(path: str | Path) -> list[FloorPlan]:
    """Load one plan file or every ``*.json`` plan in a directory (sorted)."""
    p = Path(path)
    if p.is_dir():
        return [load_floorplan(f) for f in sorted(p.glob("*.json"))]
    return [load_floorplan(p)]

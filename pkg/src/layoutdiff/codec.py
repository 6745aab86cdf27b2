"""Mapping between physical scenes and the flat diffusion-space vector.

Per-slot channel layout (D = 3 + 3 + 2 + (C + 1) + K):

    [loc_x, loc_y, loc_z, size_x, size_y, size_z, cos(yaw), sin(yaw),
     class_logits (C + 1), latent (K)]

Locations map affinely from the floor-plan bbox onto [-1, 1]^2 x [0, 1],
sizes through the log of the catalog extent range onto [-1, 1], and the
remaining channels pass through unchanged. Every map is invertible on all of
R, so any diffusion-space vector decodes to a valid scene.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import wrap_angle
from .scene import EMPTY_SLOT_SIZE, AssetCatalog, FloorPlan, ObjectSlot, SceneLayout, SceneError

DEFAULT_HEIGHT_RANGE = 3.0


class UnknownFloorPlanError(KeyError):
    """Scene references a floor plan the codec was not built for."""


@dataclass(frozen=True)
class NormalizationSpec:
    """Invertible scene <-> vector codec bound to one floor plan and catalog."""

    floorplan_id: str
    bbox: tuple[float, float, float, float]
    height_range: float
    log_size_lo: float
    log_size_hi: float
    n_max: int
    n_classes: int
    latent_dim: int

    @classmethod
    def for_floorplan(
        cls,
        floorplan: FloorPlan,
        catalog: AssetCatalog,
        n_max: int,
        height_range: float = DEFAULT_HEIGHT_RANGE,
    ) -> "NormalizationSpec":
        lo, hi = catalog.extent_log_range()
        if not hi > lo:
            # Degenerate single-size catalogs still need an invertible map.
            lo, hi = lo - 0.5, hi + 0.5
        return cls(
            floorplan_id=floorplan.plan_id,
            bbox=floorplan.bbox,
            height_range=float(height_range),
            log_size_lo=lo,
            log_size_hi=hi,
            n_max=int(n_max),
            n_classes=catalog.n_classes,
            latent_dim=catalog.latent_dim,
        )

    # -- channel layout -----------------------------------------------------

    @property
    def slot_dim(self) -> int:
        return 3 + 3 + 2 + (self.n_classes + 1) + self.latent_dim

    @property
    def state_dim(self) -> int:
        return self.n_max * self.slot_dim

    @property
    def logit_slice(self) -> slice:
        return slice(8, 8 + self.n_classes + 1)

    @property
    def latent_slice(self) -> slice:
        return slice(8 + self.n_classes + 1, self.slot_dim)

    def empty_logit_indices(self) -> np.ndarray:
        """Flat state indices of every slot's empty-class logit channel."""
        first = 8 + self.n_classes
        return first + self.slot_dim * np.arange(self.n_max)

    # -- scalar maps ---------------------------------------------------------

    def _loc_scale_offset(self) -> tuple[np.ndarray, np.ndarray]:
        x0, y0, x1, y1 = self.bbox
        scale = np.array([(x1 - x0) / 2.0, (y1 - y0) / 2.0, self.height_range])
        offset = np.array([(x0 + x1) / 2.0, (y0 + y1) / 2.0, 0.0])
        return scale, offset

    def _size_scale_offset(self) -> tuple[float, float]:
        scale = (self.log_size_hi - self.log_size_lo) / 2.0
        offset = (self.log_size_hi + self.log_size_lo) / 2.0
        return scale, offset

    def location_to_state(self, loc: np.ndarray) -> np.ndarray:
        scale, offset = self._loc_scale_offset()
        return (np.asarray(loc, dtype=float) - offset) / scale

    def location_from_state(self, u: np.ndarray) -> np.ndarray:
        scale, offset = self._loc_scale_offset()
        return np.asarray(u, dtype=float) * scale + offset

    def size_to_state(self, size: np.ndarray) -> np.ndarray:
        scale, offset = self._size_scale_offset()
        return (np.log(np.asarray(size, dtype=float)) - offset) / scale

    def size_from_state(self, u: np.ndarray) -> np.ndarray:
        scale, offset = self._size_scale_offset()
        return np.exp(np.asarray(u, dtype=float) * scale + offset)

    def location_jacobian(self) -> np.ndarray:
        """d(physical location) / d(state channel), per axis."""
        scale, _ = self._loc_scale_offset()
        return scale

    def size_jacobian(self, size: np.ndarray) -> np.ndarray:
        """d(physical size) / d(state channel) at the given physical size."""
        scale, _ = self._size_scale_offset()
        return np.asarray(size, dtype=float) * scale


def normalize_scene(scene: SceneLayout, spec: NormalizationSpec) -> np.ndarray:
    """Encode a scene into its diffusion-space vector (x0)."""
    if scene.floorplan_id != spec.floorplan_id:
        raise UnknownFloorPlanError(scene.floorplan_id)
    if scene.n_max != spec.n_max:
        raise SceneError(f"scene has {scene.n_max} slots, codec expects {spec.n_max}")
    out = np.empty(spec.state_dim)
    for i, slot in enumerate(scene.slots):
        if len(slot.class_logits) != spec.n_classes + 1:
            raise SceneError("slot logits do not match catalog class count")
        if len(slot.latent) != spec.latent_dim:
            raise SceneError("slot latent does not match catalog latent dim")
        base = i * spec.slot_dim
        out[base : base + 3] = spec.location_to_state(slot.location)
        out[base + 3 : base + 6] = spec.size_to_state(slot.size)
        out[base + 6] = np.cos(slot.yaw)
        out[base + 7] = np.sin(slot.yaw)
        out[base + 8 : base + 8 + spec.n_classes + 1] = slot.class_logits
        out[base + 8 + spec.n_classes + 1 : base + spec.slot_dim] = slot.latent
    return out


def denormalize_scene(
    state: np.ndarray,
    spec: NormalizationSpec,
    floorplan_id: str | None = None,
    seed: int = 0,
) -> SceneLayout:
    """Decode a diffusion-space vector back into a physical scene."""
    state = np.asarray(state, dtype=float)
    if state.shape != (spec.state_dim,):
        raise SceneError(f"state has shape {state.shape}, expected ({spec.state_dim},)")
    slots = []
    for i in range(spec.n_max):
        base = i * spec.slot_dim
        loc = spec.location_from_state(state[base : base + 3])
        size = spec.size_from_state(state[base + 3 : base + 6])
        yaw = wrap_angle(float(np.arctan2(state[base + 7], state[base + 6])))
        logits = state[base + 8 : base + 8 + spec.n_classes + 1].copy()
        latent = state[base + 8 + spec.n_classes + 1 : base + spec.slot_dim].copy()
        slots.append(ObjectSlot(location=loc, size=size, yaw=yaw, class_logits=logits, latent=latent))
    return SceneLayout(slots=tuple(slots), floorplan_id=floorplan_id or spec.floorplan_id, seed=seed)


def clear_empty_slots(scene: SceneLayout, floorplan: FloorPlan) -> SceneLayout:
    """Reset the geometry of empty-argmax slots to the canonical empty
    encoding, keeping their logits and latent as decoded."""
    cx, cy = floorplan.center()
    slots = []
    for slot in scene.slots:
        if slot.occupied:
            slots.append(slot)
        else:
            slots.append(
                ObjectSlot(
                    location=np.array([cx, cy, 0.0]),
                    size=np.full(3, EMPTY_SLOT_SIZE),
                    yaw=0.0,
                    class_logits=slot.class_logits,
                    latent=slot.latent,
                )
            )
    return SceneLayout(slots=tuple(slots), floorplan_id=scene.floorplan_id, seed=scene.seed)

"""Differentiable constraint potentials and their composition.

Each potential maps a diffusion-space state to a non-negative loss and a
step direction. Sign convention: ``evaluate`` returns (value, g) where g is
the NEGATED loss gradient, so adding ``lambda * sigma^2 * g`` to a reverse-
step mean lowers the loss. ``check_gradient`` accounts for this when
comparing against finite differences.

Potentials are pure given their immutable codec/catalog references and are
safe to evaluate concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import NormalizationSpec
from .scene import ArticulationSpec, AssetCatalog


@dataclass(frozen=True)
class QuantityTarget:
    """Desired occupied-slot count and, optionally, a frozen per-slot
    emptiness assignment (1 = slot should be empty)."""

    n_target: int
    emptiness: np.ndarray | None = None

    def __post_init__(self):
        if self.emptiness is not None:
            emp = np.asarray(self.emptiness, dtype=float)
            object.__setattr__(self, "emptiness", emp)
            if not np.all((emp == 0.0) | (emp == 1.0)):
                raise ValueError("emptiness entries must be binary")
            if int(emp.sum()) != len(emp) - self.n_target:
                raise ValueError("emptiness must mark exactly n_max - n_target slots empty")


def derive_emptiness(empty_logits: np.ndarray, n_target: int) -> np.ndarray:
    """Designate the ``n_target`` slots with the lowest empty logit as
    occupied (emptiness 0); ties broken by slot index."""
    n_max = len(empty_logits)
    if n_target > n_max:
        raise ValueError(f"n_target={n_target} exceeds n_max={n_max}")
    order = np.lexsort((np.arange(n_max), empty_logits))
    emptiness = np.ones(n_max)
    emptiness[order[:n_target]] = 0.0
    return emptiness


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    # max(x, 0) - x * target + log(1 + exp(-|x|)), numerically stable
    return np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))


class QuantityPotential:
    """Steers how many slots decode as occupied.

    The loss is the mean binary cross-entropy between each slot's empty-class
    logit and its emptiness target, so the step direction only touches the
    empty-logit channels.
    """

    name = "quantity"

    def __init__(self, spec: NormalizationSpec, target: QuantityTarget):
        self.spec = spec
        self.target = target
        self._indices = spec.empty_logit_indices()

    def _emptiness_for(self, logits: np.ndarray) -> np.ndarray:
        if self.target.emptiness is not None:
            return self.target.emptiness
        return derive_emptiness(logits, self.target.n_target)

    def evaluate(self, state: np.ndarray) -> tuple[float, np.ndarray]:
        state = np.asarray(state, dtype=float)
        logits = state[self._indices]
        emptiness = self._emptiness_for(logits)
        value = float(np.mean(_bce_with_logits(logits, emptiness)))
        grad = np.zeros_like(state)
        # descent direction: -(sigmoid(logit) - target) / n_max
        grad[self._indices] = -(_sigmoid(logits) - emptiness) / len(logits)
        return value, grad

    def boundary_signature(self, state: np.ndarray) -> tuple:
        logits = np.asarray(state, dtype=float)[self._indices]
        return tuple(np.nonzero(self._emptiness_for(logits) == 0.0)[0].tolist())


def quantity_loss(
    state: np.ndarray, spec: NormalizationSpec, target: QuantityTarget
) -> tuple[float, np.ndarray]:
    return QuantityPotential(spec, target).evaluate(state)


class ArticulationClearancePotential:
    """Penalizes overlap between each object's articulated extension volume
    and every other object's static box.

    The value is the sum over ordered occupied pairs (i, j) of the 3D IoU
    between slot i's extended box and slot j's static box. Gradients flow to
    location and size channels through the axis-aligned face positions;
    orientation channels get zero gradient (enclosing-box approximation) and
    class channels are treated as piecewise constant.
    """

    name = "articoll"

    def __init__(self, spec: NormalizationSpec, catalog: AssetCatalog):
        self.spec = spec
        self.catalog = catalog
        self._class_specs: list[ArticulationSpec | None] = [
            catalog.class_articulation(c) for c in range(catalog.n_classes)
        ]

    # -- decoding -------------------------------------------------------------

    def _decode(self, state: np.ndarray):
        spec = self.spec
        s = np.asarray(state, dtype=float).reshape(spec.n_max, spec.slot_dim)
        loc = spec.location_from_state(s[:, 0:3])
        size = spec.size_from_state(s[:, 3:6])
        yaw = np.arctan2(s[:, 7], s[:, 6])
        logits = s[:, spec.logit_slice]
        classes = np.argmax(logits, axis=1)
        occupied = classes != spec.n_classes
        return loc, size, yaw, classes, occupied

    def _boxes(self, loc, size, yaw, classes, occupied):
        n = self.spec.n_max
        c = np.abs(np.cos(yaw))
        s = np.abs(np.sin(yaw))
        half = np.stack([c * size[:, 0] + s * size[:, 1], s * size[:, 0] + c * size[:, 1], size[:, 2]], axis=1)
        lo_s = loc - half
        hi_s = loc + half
        ext_lo = np.zeros((n, 3))
        ext_hi = np.zeros((n, 3))
        for i in range(n):
            if not occupied[i]:
                continue
            art = self._class_specs[classes[i]] if classes[i] < len(self._class_specs) else None
            if art is None or art.extension_depth == 0.0:
                continue
            cy, sy = math.cos(yaw[i]), math.sin(yaw[i])
            ax = art.axis
            world = np.array([cy * ax[0] - sy * ax[1], sy * ax[0] + cy * ax[1], ax[2]]) * art.extension_depth
            ext_lo[i] = np.minimum(0.0, world)
            ext_hi[i] = np.maximum(0.0, world)
        return lo_s, hi_s, lo_s + ext_lo, hi_s + ext_hi, half

    @staticmethod
    def _pair_terms(lo_e, hi_e, lo_s, hi_s, occupied):
        """Per ordered pair overlap bookkeeping in (n, n, ...) arrays."""
        lo_i = np.maximum(lo_e[:, None, :], lo_s[None, :, :])
        hi_i = np.minimum(hi_e[:, None, :], hi_s[None, :, :])
        overlap = hi_i - lo_i
        valid = occupied[:, None] & occupied[None, :]
        np.fill_diagonal(valid, False)
        colliding = valid & np.all(overlap > 0.0, axis=2)
        return overlap, valid, colliding

    def evaluate(self, state: np.ndarray) -> tuple[float, np.ndarray]:
        spec = self.spec
        state = np.asarray(state, dtype=float)
        loc, size, yaw, classes, occupied = self._decode(state)
        lo_s, hi_s, lo_e, hi_e, _ = self._boxes(loc, size, yaw, classes, occupied)
        overlap, _, colliding = self._pair_terms(lo_e, hi_e, lo_s, hi_s, occupied)

        grad = np.zeros_like(state)
        if not colliding.any():
            return 0.0, grad

        w_ext = hi_e - lo_e
        w_sta = hi_s - lo_s
        vol_ext = np.prod(w_ext, axis=1)
        vol_sta = np.prod(w_sta, axis=1)
        ov = np.where(colliding[:, :, None], overlap, 1.0)
        inter = np.where(colliding, np.prod(ov, axis=2), 0.0)
        union = vol_ext[:, None] + vol_sta[None, :] - inter
        value = float(np.sum(np.where(colliding, inter / union, 0.0)))

        # d(iou)/d(face) for the extended box of i and the static box of j:
        #   iou = I/U with U = VA + VB - I, so
        #   d iou = [dI (U + I) - I (dVA + dVB)] / U^2
        u2 = np.where(colliding, union * union, 1.0)
        coef_inter = np.where(colliding, (union + inter) / u2, 0.0)  # multiplies dI
        coef_vol = np.where(colliding, inter / u2, 0.0)  # multiplies dVA/dVB

        d_inter_d_ov = np.where(colliding[:, :, None], inter[:, :, None] / ov, 0.0)
        hi_binds_a = (hi_e[:, None, :] < hi_s[None, :, :]) & colliding[:, :, None]
        lo_binds_a = (lo_e[:, None, :] > lo_s[None, :, :]) & colliding[:, :, None]
        hi_binds_b = (hi_s[None, :, :] < hi_e[:, None, :]) & colliding[:, :, None]
        lo_binds_b = (lo_s[None, :, :] > lo_e[:, None, :]) & colliding[:, :, None]

        # dV/d(face) = V / width, broadcast per owner over the other index.
        per_i = vol_ext[:, None] / w_ext  # (n, 3)
        per_j = vol_sta[:, None] / w_sta  # (n, 3)
        dva = np.where(colliding[:, :, None], per_i[:, None, :], 0.0)
        dvb = np.where(colliding[:, :, None], per_j[None, :, :], 0.0)

        d_hi_a = coef_inter[:, :, None] * d_inter_d_ov * hi_binds_a - coef_vol[:, :, None] * dva
        d_lo_a = -coef_inter[:, :, None] * d_inter_d_ov * lo_binds_a + coef_vol[:, :, None] * dva
        d_hi_b = coef_inter[:, :, None] * d_inter_d_ov * hi_binds_b - coef_vol[:, :, None] * dvb
        d_lo_b = -coef_inter[:, :, None] * d_inter_d_ov * lo_binds_b + coef_vol[:, :, None] * dvb

        # Faces -> slot location and world half-extents.
        d_loc = d_hi_a.sum(axis=1) + d_lo_a.sum(axis=1) + d_hi_b.sum(axis=0) + d_lo_b.sum(axis=0)
        d_half = d_hi_a.sum(axis=1) - d_lo_a.sum(axis=1) + d_hi_b.sum(axis=0) - d_lo_b.sum(axis=0)

        # World half-extents -> oriented size (symmetric 2x2 mixing block).
        c = np.abs(np.cos(yaw))
        s = np.abs(np.sin(yaw))
        d_size = np.stack(
            [c * d_half[:, 0] + s * d_half[:, 1], s * d_half[:, 0] + c * d_half[:, 1], d_half[:, 2]], axis=1
        )

        # Physical -> normalized channels.
        loc_jac = spec.location_jacobian()
        size_jac = spec.size_jacobian(size)
        g = grad.reshape(spec.n_max, spec.slot_dim)
        g[:, 0:3] = -d_loc * loc_jac[None, :]
        g[:, 3:6] = -d_size * size_jac
        return value, grad

    def boundary_signature(self, state: np.ndarray) -> tuple:
        loc, size, yaw, classes, occupied = self._decode(np.asarray(state, dtype=float))
        lo_s, hi_s, lo_e, hi_e, _ = self._boxes(loc, size, yaw, classes, occupied)
        overlap, valid, _ = self._pair_terms(lo_e, hi_e, lo_s, hi_s, occupied)
        bits = np.concatenate(
            [
                (overlap > 0.0)[valid].ravel(),
                (hi_e[:, None, :] < hi_s[None, :, :])[valid].ravel(),
                (lo_e[:, None, :] > lo_s[None, :, :])[valid].ravel(),
            ]
        )
        return (tuple(occupied.tolist()), tuple(classes.tolist()), bits.tobytes())

    def grad_support(self, state: np.ndarray) -> np.ndarray:
        """Channels whose returned gradient is the true derivative: location
        and size. Orientation channels are zero by the enclosing-box design,
        so finite differences are not expected to agree there."""
        support = np.zeros(self.spec.state_dim, dtype=bool)
        view = support.reshape(self.spec.n_max, self.spec.slot_dim)
        view[:, 0:6] = True
        return support


def articulation_overlap_loss(
    state: np.ndarray, spec: NormalizationSpec, catalog: AssetCatalog
) -> tuple[float, np.ndarray]:
    return ArticulationClearancePotential(spec, catalog).evaluate(state)


# ---------------------------------------------------------------------------
# Composition and verification


@dataclass(frozen=True)
class GatedTerm:
    """A potential with its weight and the step threshold below which it is
    active (None = always active)."""

    potential: object
    weight: float
    t_max: int | None = None

    def active(self, t: int | None) -> bool:
        return self.t_max is None or t is None or t < self.t_max


class CompositeGuidance:
    """Weighted, schedule-gated sum of potentials."""

    def __init__(self, terms: list[GatedTerm]):
        if any(term.weight < 0 for term in terms):
            raise ValueError("guidance weights must be >= 0")
        self.terms = list(terms)

    def evaluate(self, state: np.ndarray, t: int | None = None) -> tuple[float, np.ndarray]:
        state = np.asarray(state, dtype=float)
        value = 0.0
        grad = np.zeros_like(state)
        for term in self.terms:
            if not term.active(t) or term.weight == 0.0:
                continue
            v, g = term.potential.evaluate(state)
            value += term.weight * v
            grad += term.weight * g
        return value, grad

    def term_values(self, state: np.ndarray, t: int | None = None) -> dict[str, float]:
        out = {}
        for term in self.terms:
            if not term.active(t) or term.weight == 0.0:
                continue
            v, _ = term.potential.evaluate(np.asarray(state, dtype=float))
            out[getattr(term.potential, "name", type(term.potential).__name__)] = float(v)
        return out

    def boundary_signature(self, state: np.ndarray, t: int | None = None) -> tuple:
        sigs = []
        for term in self.terms:
            if not term.active(t) or term.weight == 0.0:
                continue
            fn = getattr(term.potential, "boundary_signature", None)
            sigs.append(fn(state) if fn else None)
        return tuple(sigs)

    def at(self, t: int) -> "_BoundComposite":
        return _BoundComposite(self, t)


@dataclass(frozen=True)
class _BoundComposite:
    composite: CompositeGuidance
    t: int

    def evaluate(self, state: np.ndarray) -> tuple[float, np.ndarray]:
        return self.composite.evaluate(state, self.t)

    def boundary_signature(self, state: np.ndarray) -> tuple:
        return self.composite.boundary_signature(state, self.t)


def check_gradient(potential, state: np.ndarray, h: float = 1e-5) -> float:
    """Max relative disagreement between the potential's step direction and
    central finite differences of its value.

    Coordinates whose piecewise region changes within +-2h (box-face contact,
    occupancy flips, target reassignment) are skipped, as are channels the
    potential marks outside its differentiable support. The returned error is
    max_k |a_k - n_k| scaled by the largest gradient magnitude seen.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    state = np.asarray(state, dtype=float)
    _, g = potential.evaluate(state)
    analytic = -g  # evaluate() returns the descent direction
    sig_fn = getattr(potential, "boundary_signature", None)
    base_sig = sig_fn(state) if sig_fn else None

    numeric = np.zeros_like(analytic)
    usable = np.ones(state.shape, dtype=bool)
    support_fn = getattr(potential, "grad_support", None)
    if support_fn is not None:
        usable &= support_fn(state)
    for k in range(state.size):
        if not usable[k]:
            continue
        if sig_fn is not None:
            probe = state.copy()
            probe[k] += 2.0 * h
            sig_hi = sig_fn(probe)
            probe[k] -= 4.0 * h
            sig_lo = sig_fn(probe)
            if sig_hi != base_sig or sig_lo != base_sig:
                usable[k] = False
                continue
        plus = state.copy()
        plus[k] += h
        minus = state.copy()
        minus[k] -= h
        v_plus, _ = potential.evaluate(plus)
        v_minus, _ = potential.evaluate(minus)
        numeric[k] = (v_plus - v_minus) / (2.0 * h)

    scale = max(float(np.abs(analytic[usable]).max(initial=0.0)), float(np.abs(numeric[usable]).max(initial=0.0)))
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic[usable] - numeric[usable]).max(initial=0.0) / scale)

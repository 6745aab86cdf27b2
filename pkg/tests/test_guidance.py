import math

import numpy as np
import pytest

from layoutdiff.codec import normalize_scene
from layoutdiff.guidance import (
    ArticulationClearancePotential,
    CompositeGuidance,
    GatedTerm,
    QuantityPotential,
    QuantityTarget,
    check_gradient,
    derive_emptiness,
)
from layoutdiff.scene import ArticulationSpec, AssetCatalog, AssetRecord

from conftest import make_scene, make_slot
from util import voxel_iou, voxel_occupancy


# -- emptiness targets ---------------------------------------------------------


def test_derive_emptiness_counts_and_ties():
    logits = np.array([0.5, -1.0, 0.2, -1.0])
    emp = derive_emptiness(logits, 2)
    # two lowest logits marked occupied; tie at -1.0 resolved by slot index
    assert emp.tolist() == [1.0, 0.0, 1.0, 0.0]
    with pytest.raises(ValueError):
        derive_emptiness(logits, 5)


def test_quantity_target_validation():
    QuantityTarget(2, emptiness=np.array([1.0, 0.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        QuantityTarget(2, emptiness=np.array([1.0, 1.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        QuantityTarget(1, emptiness=np.array([0.5, 1.0]))


# -- quantity potential ----------------------------------------------------------


def _state_with_empty_logits(spec, values):
    state = np.zeros(spec.state_dim)
    state[spec.empty_logit_indices()] = values
    return state


def test_quantity_saturated_correct_is_near_zero(spec):
    pot = QuantityPotential(spec, QuantityTarget(4, emptiness=np.array([1, 1, 1, 1, 0, 0, 0, 0], dtype=float)))
    state = _state_with_empty_logits(spec, [10, 10, 10, 10, -10, -10, -10, -10])
    value, grad = pot.evaluate(state)
    assert value <= 1e-4
    assert np.abs(grad).max() <= 1e-4


def test_quantity_neutral_logits_give_log_two(spec):
    pot = QuantityPotential(spec, QuantityTarget(4))
    state = _state_with_empty_logits(spec, np.zeros(8))
    value, _ = pot.evaluate(state)
    assert value == pytest.approx(math.log(2.0), rel=1e-9)


def test_quantity_gradient_matches_finite_differences(spec):
    pot = QuantityPotential(spec, QuantityTarget(4))
    for k in range(100):
        state = np.random.default_rng(k).normal(0, 1, spec.state_dim)
        assert check_gradient(pot, state, h=1e-5) < 1e-6


def test_quantity_gradient_only_touches_empty_channels(spec):
    pot = QuantityPotential(spec, QuantityTarget(3))
    state = np.random.default_rng(0).normal(0, 1, spec.state_dim)
    _, grad = pot.evaluate(state)
    mask = np.zeros(spec.state_dim, dtype=bool)
    mask[spec.empty_logit_indices()] = True
    assert np.all(grad[~mask] == 0.0)
    assert np.any(grad[mask] != 0.0)


def test_quantity_zero_iff_saturated(spec):
    pot = QuantityPotential(spec, QuantityTarget(4))
    rng = np.random.default_rng(1)
    for _ in range(20):
        state = rng.normal(0, 1, spec.state_dim)
        value, _ = pot.evaluate(state)
        logits = state[spec.empty_logit_indices()]
        emp = derive_emptiness(logits, 4)
        sig = 1 / (1 + np.exp(-logits))
        saturated = np.all(np.abs(sig - emp) < 1e-4)
        assert (value < 1e-4) == bool(saturated)


# -- articulation clearance -------------------------------------------------------


def _two_slot_state(spec, slots):
    scene = make_scene(slots, n_max=spec.n_max)
    return normalize_scene(scene, spec)


def test_articoll_disjoint_is_zero(spec, catalog):
    pot = ArticulationClearancePotential(spec, catalog)
    slots = [
        make_slot([0.5, 0.5, 0.5], [0.5, 0.5, 0.5], class_id=3),
        make_slot([5.5, 5.5, 0.5], [0.5, 0.5, 0.5], class_id=3),
    ]
    value, grad = pot.evaluate(_two_slot_state(spec, slots))
    assert value == 0.0
    assert np.all(grad == 0.0)


def test_articoll_coincident_static_boxes_double_count(spec, catalog):
    # chairs carry no articulation in the synthetic catalog
    pot = ArticulationClearancePotential(spec, catalog)
    slots = [
        make_slot([2.0, 2.0, 0.5], [0.5, 0.5, 0.5], class_id=3),
        make_slot([2.0, 2.0, 0.5], [0.5, 0.5, 0.5], class_id=3),
    ]
    value, _ = pot.evaluate(_two_slot_state(spec, slots))
    assert value == pytest.approx(2.0, rel=1e-9)


def _cabinet_catalog():
    """Catalog where class 0 extends +x by 0.5 m and class 1 is static."""
    return AssetCatalog(
        classes=("cabinet", "box"),
        assets=(
            AssetRecord("cab", 0, np.array([0.5, 0.5, 0.5]), np.zeros(2), ArticulationSpec([1, 0, 0], 0.5)),
            AssetRecord("box", 1, np.array([0.5, 0.5, 0.5]), np.zeros(2)),
        ),
    )


def test_articoll_extension_overlap_value_matches_voxel_oracle(plan):
    from layoutdiff.codec import NormalizationSpec

    catalog = _cabinet_catalog()
    spec = NormalizationSpec.for_floorplan(plan, catalog, n_max=2)
    pot = ArticulationClearancePotential(spec, catalog)
    # cabinet body x in [0,1], extension to 1.5; static box x in [1,2]
    cab = make_slot([0.5, 0.5, 0.5], [0.5, 0.5, 0.5], class_id=0, n_classes=2, latent_dim=2)
    box = make_slot([1.5, 0.5, 0.5], [0.5, 0.5, 0.5], class_id=1, n_classes=2, latent_dim=2)
    state = normalize_scene(make_scene([cab, box], n_max=2, n_classes=2, latent_dim=2), spec)
    value, _ = pot.evaluate(state)
    # IoU(extended cabinet, static box) = 0.5 / (1.5 + 1 - 0.5); reverse term 0
    assert value == pytest.approx(0.25, rel=1e-9)

    cell = 0.02
    lo = np.array([-0.1, -0.1, -0.1])
    hi = np.array([2.1, 1.1, 1.1])
    occ_ext = voxel_occupancy([0.5, 0.5, 0.5], [0.5, 0.5, 0.5], 0.0, lo, hi, cell, sweep=[1, 0, 0], sweep_depth=0.5, sweep_steps=80)
    occ_box = voxel_occupancy([1.5, 0.5, 0.5], [0.5, 0.5, 0.5], 0.0, lo, hi, cell)
    assert voxel_iou(occ_ext, occ_box, cell) == pytest.approx(0.25, abs=0.02)


def test_articoll_gradient_matches_finite_differences(spec, catalog):
    pot = ArticulationClearancePotential(spec, catalog)
    checked = 0
    for k in range(100):
        state = np.random.default_rng(1000 + k).normal(0, 0.6, spec.state_dim)
        if pot.evaluate(state)[0] > 0:
            checked += 1
        assert check_gradient(pot, state, h=1e-6) < 1e-4
    assert checked > 20  # the suite must actually exercise colliding configs


def test_articoll_translation_invariance_and_internal_forces(spec, catalog):
    pot = ArticulationClearancePotential(spec, catalog)
    rng = np.random.default_rng(7)
    view_dim = (spec.n_max, spec.slot_dim)
    for _ in range(20):
        state = rng.normal(0, 0.6, spec.state_dim)
        value, grad = pot.evaluate(state)
        shifted = state.copy().reshape(view_dim)
        shifted[:, 0] += 0.37  # same normalized-offset shift for every slot
        shifted[:, 1] -= 0.21
        v2, _ = pot.evaluate(shifted.ravel())
        assert v2 == pytest.approx(value, rel=1e-9, abs=1e-12)
        g = grad.reshape(view_dim)
        assert float(g[:, 0].sum()) == pytest.approx(0.0, abs=1e-9)
        assert float(g[:, 1].sum()) == pytest.approx(0.0, abs=1e-9)
        assert float(g[:, 2].sum()) == pytest.approx(0.0, abs=1e-9)


def test_articoll_nonnegative_and_zero_only_when_disjoint(spec, catalog):
    pot = ArticulationClearancePotential(spec, catalog)
    rng = np.random.default_rng(8)
    for _ in range(50):
        state = rng.normal(0, 0.7, spec.state_dim)
        value, _ = pot.evaluate(state)
        assert value >= 0.0


def test_articoll_separation_monotonicity(spec, catalog):
    # moving two overlapping static boxes apart decreases the loss until they separate
    pot = ArticulationClearancePotential(spec, catalog)
    values = []
    for step in range(20):
        offset = 0.05 + step * (1.1 / 19)
        slots = [
            make_slot([2.0 - offset / 2, 2.0, 0.5], [0.5, 0.5, 0.5], class_id=3),
            make_slot([2.0 + offset / 2, 2.0, 0.5], [0.5, 0.5, 0.5], class_id=3),
        ]
        values.append(pot.evaluate(_two_slot_state(spec, slots))[0])
    for a, b in zip(values, values[1:]):
        if a > 0:
            assert b < a or b == 0.0
    assert values[-1] == 0.0


def test_articoll_empty_scene_is_zero(spec, catalog):
    pot = ArticulationClearancePotential(spec, catalog)
    state = normalize_scene(make_scene([], n_max=spec.n_max), spec)
    value, grad = pot.evaluate(state)
    assert value == 0.0 and np.all(grad == 0.0)


# -- composite -------------------------------------------------------------------


def test_composite_all_gates_closed(spec, catalog):
    guid = CompositeGuidance(
        [
            GatedTerm(QuantityPotential(spec, QuantityTarget(4)), 1.0, t_max=100),
            GatedTerm(ArticulationClearancePotential(spec, catalog), 1.0, t_max=10),
        ]
    )
    state = np.random.default_rng(0).normal(0, 1, spec.state_dim)
    value, grad = guid.evaluate(state, t=150)
    assert value == 0.0 and np.all(grad == 0.0)
    assert guid.term_values(state, t=150) == {}


def test_composite_single_term_identity(spec):
    pot = QuantityPotential(spec, QuantityTarget(4))
    guid = CompositeGuidance([GatedTerm(pot, 1.0, t_max=None)])
    state = np.random.default_rng(1).normal(0, 1, spec.state_dim)
    v1, g1 = pot.evaluate(state)
    v2, g2 = guid.evaluate(state, t=5)
    assert v1 == v2 and np.array_equal(g1, g2)


def test_composite_weight_scales_linearly(spec):
    pot = QuantityPotential(spec, QuantityTarget(4))
    state = np.random.default_rng(2).normal(0, 1, spec.state_dim)
    v1, g1 = CompositeGuidance([GatedTerm(pot, 1.0)]).evaluate(state, t=1)
    v2, g2 = CompositeGuidance([GatedTerm(pot, 2.0)]).evaluate(state, t=1)
    assert v2 == pytest.approx(2.0 * v1)
    assert np.allclose(g2, 2.0 * g1)


def test_composite_gating_boundaries(spec):
    pot = QuantityPotential(spec, QuantityTarget(4))
    guid = CompositeGuidance([GatedTerm(pot, 1.0, t_max=100)])
    state = np.random.default_rng(3).normal(0, 1, spec.state_dim)
    assert guid.evaluate(state, t=100)[0] == 0.0
    assert guid.evaluate(state, t=99)[0] > 0.0


def test_composite_rejects_negative_weight(spec):
    pot = QuantityPotential(spec, QuantityTarget(4))
    with pytest.raises(ValueError):
        CompositeGuidance([GatedTerm(pot, -1.0)])


# -- checker ---------------------------------------------------------------------


class _ConstantPotential:
    def evaluate(self, state):
        return 5.0, np.zeros_like(state)


def test_check_gradient_constant_potential():
    assert check_gradient(_ConstantPotential(), np.zeros(6), h=1e-5) == 0.0


def test_check_gradient_rejects_bad_step():
    with pytest.raises(ValueError):
        check_gradient(_ConstantPotential(), np.zeros(3), h=0.0)

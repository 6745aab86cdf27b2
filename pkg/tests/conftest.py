import numpy as np
import pytest

from layoutdiff.codec import NormalizationSpec
from layoutdiff.corpus import single_room_plan, synthetic_catalog
from layoutdiff.scene import ObjectSlot, SceneLayout

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def catalog():
    return synthetic_catalog()


@pytest.fixture(scope="session")
def plan():
    return single_room_plan(5.0)


@pytest.fixture(scope="session")
def spec(plan, catalog):
    return NormalizationSpec.for_floorplan(plan, catalog, n_max=8)


def make_slot(loc, size, yaw=0.0, class_id=2, n_classes=4, latent_dim=8, latent=None):
    logits = np.full(n_classes + 1, -3.0)
    logits[class_id] = 3.0
    return ObjectSlot(
        location=np.asarray(loc, dtype=float),
        size=np.asarray(size, dtype=float),
        yaw=float(yaw),
        class_logits=logits,
        latent=np.zeros(latent_dim) if latent is None else np.asarray(latent, dtype=float),
    )


def make_scene(slots, plan_id="toyroom", n_max=None, n_classes=4, latent_dim=8):
    from layoutdiff.scene import EMPTY_SLOT_SIZE

    slots = list(slots)
    if n_max is not None:
        while len(slots) < n_max:
            logits = np.full(n_classes + 1, -3.0)
            logits[-1] = 3.0
            slots.append(
                ObjectSlot(
                    location=np.array([2.5, 2.5, 0.0]),
                    size=np.full(3, EMPTY_SLOT_SIZE),
                    yaw=0.0,
                    class_logits=logits,
                    latent=np.zeros(latent_dim),
                )
            )
    return SceneLayout(slots=tuple(slots), floorplan_id=plan_id)

"""Parameterized floor-plan generation.

Rooms are realized as an axis-aligned rectangular subdivision (a slicing
tree) of a bounding rectangle; simulated annealing searches over wall
positions and room-type assignments against a four-term energy. A prompt
front end maps natural language to the generator parameters through a
pluggable language-model client (HTTP or deterministic mock).
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .metrics import RoomGraph
from .scene import ROOM_TYPES, FloorPlan, Room

log = logging.getLogger(__name__)

MIN_ROOM_AREA = 1.0  # m^2; below this a subdivision cell is unusable
DOOR_MIN_WALL = 0.8  # m of shared wall needed to carry a door
SQUARENESS_HIGH = 8.0  # preset used when a prompt asks for square rooms
PLAN_ASPECT = 4.0 / 3.0


class InfeasibleParamsError(ValueError):
    """Parameters request more rooms than the area can hold."""


class LlmError(RuntimeError):
    """Language-model transport failure."""


class LlmSchemaError(LlmError):
    """Response failed schema validation after retries; carries raw text."""

    def __init__(self, message: str, raw_text: str):
        super().__init__(message)
        self.raw_text = raw_text


@dataclass(frozen=True)
class AnnealSchedule:
    initial_temp: float = 1.5
    cooling_rate: float = 0.995
    steps: int = 3000

    def __post_init__(self):
        if self.initial_temp <= 0 or not 0.0 < self.cooling_rate < 1.0 or self.steps < 1:
            raise ValueError("invalid annealing schedule")


@dataclass(frozen=True)
class FloorplanParams:
    total_area: float
    room_specs: tuple[tuple[str, float], ...]
    required_adjacencies: tuple[tuple[str, str], ...] = ()
    squareness_weight: float = 1.0
    adjacency_weight: float = 1.0
    area_weight: float = 4.0
    count_weight: float = 2.0
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)

    def __post_init__(self):
        object.__setattr__(self, "room_specs", tuple((str(t), float(r)) for t, r in self.room_specs))
        object.__setattr__(self, "required_adjacencies", tuple((str(a), str(b)) for a, b in self.required_adjacencies))
        if self.total_area <= 0:
            raise ValueError("total_area must be positive")
        if not self.room_specs:
            raise ValueError("room_specs must be non-empty")
        ratios = [r for _, r in self.room_specs]
        if any(r < 0 for r in ratios):
            raise ValueError("area ratios must be >= 0")
        if sum(ratios) > 1.05:
            raise ValueError("area ratios sum above 1.05")
        for w in (self.squareness_weight, self.adjacency_weight, self.area_weight, self.count_weight):
            if not np.isfinite(w) or w < 0:
                raise ValueError("energy weights must be finite and >= 0")

    def target_ratio_by_type(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for t, r in self.room_specs:
            out[t] = out.get(t, 0.0) + r
        return out

    def count_by_type(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for t, _ in self.room_specs:
            out[t] = out.get(t, 0) + 1
        return out


# ---------------------------------------------------------------------------
# Slicing-tree layout


@dataclass
class _Leaf:
    room_type: str


@dataclass
class _Split:
    horizontal: bool
    frac: float
    left: object
    right: object


Rect = tuple[float, float, float, float]  # x0, y0, x1, y1


def _build_tree(types: list[str], ratios: list[float], depth: int = 0):
    if len(types) == 1:
        return _Leaf(types[0])
    total = sum(ratios)
    half = total / 2.0
    acc = 0.0
    cut = 1
    for i, r in enumerate(ratios[:-1]):
        acc += r
        cut = i + 1
        if acc >= half:
            break
    left_ratio = sum(ratios[:cut]) / total if total > 0 else cut / len(types)
    return _Split(
        horizontal=depth % 2 == 1,
        frac=min(0.9, max(0.1, left_ratio)),
        left=_build_tree(types[:cut], ratios[:cut], depth + 1),
        right=_build_tree(types[cut:], ratios[cut:], depth + 1),
    )


def _realize(node, rect: Rect, out: list[tuple[str, Rect]]) -> None:
    if isinstance(node, _Leaf):
        out.append((node.room_type, rect))
        return
    x0, y0, x1, y1 = rect
    if node.horizontal:
        ym = y0 + (y1 - y0) * node.frac
        _realize(node.left, (x0, y0, x1, ym), out)
        _realize(node.right, (x0, ym, x1, y1), out)
    else:
        xm = x0 + (x1 - x0) * node.frac
        _realize(node.left, (x0, y0, xm, y1), out)
        _realize(node.right, (xm, y0, x1, y1), out)


def _collect(node, leaves: list[_Leaf], splits: list[_Split]) -> None:
    if isinstance(node, _Leaf):
        leaves.append(node)
    else:
        splits.append(node)
        _collect(node.left, leaves, splits)
        _collect(node.right, leaves, splits)


def _shared_wall(a: Rect, b: Rect, tol: float = 1e-6) -> float:
    """Length of the wall segment two rectangles share (0 if not adjacent)."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    if abs(ax1 - bx0) < tol or abs(bx1 - ax0) < tol:
        return max(0.0, min(ay1, by1) - max(ay0, by0))
    if abs(ay1 - by0) < tol or abs(by1 - ay0) < tol:
        return max(0.0, min(ax1, bx1) - max(ax0, bx0))
    return 0.0


def layout_energy(layout: list[tuple[str, Rect]], params: FloorplanParams) -> float:
    """Weighted sum of area-ratio deviation, room-count deviation, missing
    required adjacencies, and squareness penalty. Lower is better; zero only
    for a layout that meets every spec with perfectly square rooms."""
    total = sum((x1 - x0) * (y1 - y0) for _, (x0, y0, x1, y1) in layout)
    targets = params.target_ratio_by_type()
    area_by_type: dict[str, float] = {}
    count_by_type: dict[str, int] = {}
    squareness = 0.0
    for room_type, (x0, y0, x1, y1) in layout:
        w, h = x1 - x0, y1 - y0
        area_by_type[room_type] = area_by_type.get(room_type, 0.0) + w * h
        count_by_type[room_type] = count_by_type.get(room_type, 0) + 1
        aspect = max(w, h) / max(min(w, h), 1e-9)
        squareness += (aspect - 1.0) ** 2

    area_term = sum(
        abs(area_by_type.get(t, 0.0) / total - targets.get(t, 0.0))
        for t in set(area_by_type) | set(targets)
    )
    spec_counts = params.count_by_type()
    count_term = sum(
        abs(count_by_type.get(t, 0) - spec_counts.get(t, 0)) for t in set(count_by_type) | set(spec_counts)
    )

    unsatisfied = 0
    for ta, tb in params.required_adjacencies:
        found = False
        for i, (type_i, rect_i) in enumerate(layout):
            for j, (type_j, rect_j) in enumerate(layout):
                if i == j or {type_i, type_j} != {ta, tb}:
                    continue
                if _shared_wall(rect_i, rect_j) >= DOOR_MIN_WALL:
                    found = True
                    break
            if found:
                break
        if not found:
            unsatisfied += 1

    return (
        params.area_weight * area_term
        + params.count_weight * count_term
        + params.adjacency_weight * unsatisfied
        + params.squareness_weight * squareness
    )


def generate_floorplan(params: FloorplanParams, seed: int) -> tuple[FloorPlan, RoomGraph, float]:
    """Anneal a rectangular subdivision for the given parameters.

    Deterministic per seed. Proposals: move a shared wall (perturb a split
    fraction), swap two rooms' types, or reassign one room's type; acceptance
    follows the Metropolis rule with geometric cooling; the best layout seen
    is returned. Doors connect rooms sharing at least 0.8 m of wall.
    """
    n_rooms = len(params.room_specs)
    if params.total_area < n_rooms * MIN_ROOM_AREA:
        raise InfeasibleParamsError(
            f"{n_rooms} rooms need at least {n_rooms * MIN_ROOM_AREA:.0f} m^2, got {params.total_area:.0f}"
        )
    rng = np.random.default_rng(seed)
    width = float(np.sqrt(params.total_area * PLAN_ASPECT))
    height = params.total_area / width
    bounds: Rect = (0.0, 0.0, width, height)

    types = [t for t, _ in params.room_specs]
    ratios = [max(r, 1e-3) for _, r in params.room_specs]
    tree = _build_tree(types, ratios)
    leaves: list[_Leaf] = []
    splits: list[_Split] = []
    _collect(tree, leaves, splits)
    type_pool = sorted(set(types))

    def realize() -> list[tuple[str, Rect]]:
        out: list[tuple[str, Rect]] = []
        _realize(tree, bounds, out)
        return out

    def snapshot() -> tuple[list[str], list[float]]:
        return ([leaf.room_type for leaf in leaves], [s.frac for s in splits])

    energy = layout_energy(realize(), params)
    best_energy = energy
    best_state = snapshot()

    temp = params.anneal.initial_temp
    for _ in range(params.anneal.steps):
        kind = int(rng.integers(0, 3)) if splits else int(rng.integers(1, 3))
        if kind == 0:
            split = splits[int(rng.integers(0, len(splits)))]
            old_frac = split.frac
            split.frac = float(np.clip(old_frac + rng.normal(0.0, 0.08), 0.1, 0.9))
            undo = lambda s=split, f=old_frac: setattr(s, "frac", f)
        elif kind == 1 and len(leaves) >= 2:
            i, j = rng.choice(len(leaves), size=2, replace=False)
            a, b = leaves[int(i)], leaves[int(j)]
            old_a, old_b = a.room_type, b.room_type
            a.room_type, b.room_type = old_b, old_a
            undo = lambda a=a, b=b, ta=old_a, tb=old_b: (
                setattr(a, "room_type", ta),
                setattr(b, "room_type", tb),
            )
        else:
            leaf = leaves[int(rng.integers(0, len(leaves)))]
            old_type = leaf.room_type
            leaf.room_type = type_pool[int(rng.integers(0, len(type_pool)))]
            undo = lambda l=leaf, t=old_type: setattr(l, "room_type", t)

        new_energy = layout_energy(realize(), params)
        delta = new_energy - energy
        if delta <= 0 or rng.random() < np.exp(-delta / max(temp, 1e-9)):
            energy = new_energy
            if energy < best_energy:
                best_energy = energy
                best_state = snapshot()
        else:
            undo()
        temp *= params.anneal.cooling_rate

    # Restore the best-seen layout before realizing the output.
    for leaf, room_type in zip(leaves, best_state[0]):
        leaf.room_type = room_type
    for split, frac in zip(splits, best_state[1]):
        split.frac = frac

    layout = realize()
    rooms = []
    for idx, (room_type, (x0, y0, x1, y1)) in enumerate(layout):
        polygon = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
        rooms.append(Room(room_id=f"room{idx}", room_type=room_type, polygon=polygon))
    doors = []
    for i in range(len(layout)):
        for j in range(i + 1, len(layout)):
            if _shared_wall(layout[i][1], layout[j][1]) >= DOOR_MIN_WALL:
                doors.append((f"room{i}", f"room{j}"))
    plan = FloorPlan(plan_id=f"plan_seed{seed}", rooms=tuple(rooms), doors=tuple(doors))
    return plan, RoomGraph.from_floorplan(plan), best_energy


# ---------------------------------------------------------------------------
# Prompt -> parameters bridge

FLOORPLAN_PARAMS_SCHEMA = {
    "type": "object",
    "required": ["total_area", "rooms", "weights", "anneal"],
    "additionalProperties": False,
    "properties": {
        "total_area": {"type": "number"},
        "rooms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["type", "ratio"],
                "additionalProperties": False,
                "properties": {
                    "type": {"type": "string", "enum": list(ROOM_TYPES)},
                    "ratio": {"type": "number"},
                },
            },
        },
        "required_adjacencies": {
            "type": "array",
            "items": {
                "type": "array",
                "minItems": 2,
                "maxItems": 2,
                "items": {"type": "string", "enum": list(ROOM_TYPES)},
            },
        },
        "weights": {
            "type": "object",
            "required": ["squareness", "adjacency", "area", "count"],
            "additionalProperties": False,
            "properties": {
                "squareness": {"type": "number"},
                "adjacency": {"type": "number"},
                "area": {"type": "number"},
                "count": {"type": "number"},
            },
        },
        "anneal": {
            "type": "object",
            "required": ["initial_temp", "cooling_rate", "steps"],
            "additionalProperties": False,
            "properties": {
                "initial_temp": {"type": "number"},
                "cooling_rate": {"type": "number"},
                "steps": {"type": "integer"},
            },
        },
    },
}

_NUMBER_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}


def _count_before(prompt: str, noun: str) -> int | None:
    match = re.search(rf"(\d+|{'|'.join(_NUMBER_WORDS)})[\s-]*{noun}", prompt)
    if not match:
        return None
    token = match.group(1)
    return int(token) if token.isdigit() else _NUMBER_WORDS[token]


class MockLlmClient:
    """Deterministic rule-based stand-in for the language model.

    Rules (all keyword matches on the lowercased prompt):
      * bedrooms: a count before "bedroom" ("two bedroom", "3-bedroom"),
        else 1 when "bedroom" appears, 0 for "studio", else 1
      * bathrooms: count before "bathroom"/"bath", default 1
      * kitchen: present for "kitchen" or generic dwellings (apartment,
        house, home, flat); office for "office"/"study"; dining for "dining"
      * total area: "small"/"compact" 45, "large"/"spacious"/"luxury" 110,
        else 55 + 15 per bedroom
      * squareness weight: "square" selects the high preset, "organic"/
        "diverse"/"irregular" the low one
      * adjacency: kitchen-living when both present; bedroom-bathroom for
        "ensuite" or "master"
    Area ratios follow fixed per-type weights, normalized to sum to one.
    """

    _RATIO_WEIGHTS = {
        "living": 1.4, "bedroom": 1.0, "kitchen": 0.7, "bathroom": 0.45,
        "office": 0.8, "dining": 0.7, "hallway": 0.35, "balcony": 0.4,
    }

    def send(self, prompt: str, schema: dict) -> str:
        text = prompt.lower()
        bedrooms = _count_before(text, "bedroom")
        if bedrooms is None:
            bedrooms = 1 if "bedroom" in text else (0 if "studio" in text else 1)
        bathrooms = _count_before(text, "bath") or 1
        rooms = [("living", 1)]
        rooms += [("bedroom", 1)] * bedrooms
        if "kitchen" in text or any(w in text for w in ("apartment", "house", "home", "flat")):
            rooms.append(("kitchen", 1))
        rooms += [("bathroom", 1)] * bathrooms
        if "office" in text or "study" in text:
            rooms.append(("office", 1))
        if "dining" in text:
            rooms.append(("dining", 1))

        if "small" in text or "compact" in text:
            total_area = 45.0
        elif any(w in text for w in ("large", "spacious", "luxury")):
            total_area = 110.0
        else:
            total_area = 55.0 + 15.0 * bedrooms

        if "square" in text:
            squareness = SQUARENESS_HIGH
        elif any(w in text for w in ("organic", "diverse", "irregular")):
            squareness = 0.2
        else:
            squareness = 1.0

        types_present = {t for t, _ in rooms}
        adjacencies = []
        if "kitchen" in types_present:
            adjacencies.append(["kitchen", "living"])
        if ("ensuite" in text or "master" in text) and "bathroom" in types_present:
            adjacencies.append(["bedroom", "bathroom"])

        weight_sum = sum(self._RATIO_WEIGHTS[t] for t, _ in rooms)
        payload = {
            "total_area": total_area,
            "rooms": [
                {"type": t, "ratio": round(self._RATIO_WEIGHTS[t] / weight_sum, 6)} for t, _ in rooms
            ],
            "required_adjacencies": adjacencies,
            "weights": {"squareness": squareness, "adjacency": 1.0, "area": 4.0, "count": 2.0},
            "anneal": {"initial_temp": 1.5, "cooling_rate": 0.995, "steps": 3000},
        }
        return json.dumps(payload)


class HttpLlmClient:
    """Client for an external completion service.

    Sends ``{"prompt", "schema", "temperature": 0}`` as JSON and expects
    ``{"text": "..."}`` back. Transport failures are retried; request and
    response bodies are logged at debug level with the token redacted.
    Instances hold no mutable state, so concurrent requests are safe.
    """

    def __init__(self, endpoint: str, token: str = "", timeout: float = 30.0, retries: int = 2, session=None):
        if session is None:
            import requests

            session = requests.Session()
        self.endpoint = endpoint
        self.token = token
        self.timeout = timeout
        self.retries = retries
        self.session = session

    @classmethod
    def from_env(cls, env: dict | None = None) -> "HttpLlmClient":
        import os

        env = env if env is not None else os.environ
        endpoint = env.get("LAYOUTDIFF_LLM_URL", "")
        if not endpoint:
            raise LlmError("LAYOUTDIFF_LLM_URL is not set (use --mock-llm for the offline client)")
        return cls(endpoint=endpoint, token=env.get("LAYOUTDIFF_LLM_TOKEN", ""))

    def send(self, prompt: str, schema: dict) -> str:
        body = {"prompt": prompt, "schema": schema, "temperature": 0}
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        log.debug("llm request endpoint=%s auth=%s body=%s", self.endpoint, "***" if self.token else "-", body)
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = self.session.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
                resp.raise_for_status()
                text = resp.json()["text"]
                log.debug("llm response body=%s", text)
                return text
            except Exception as exc:  # transport or protocol error; retry
                last_exc = exc
        raise LlmError(f"llm request failed after {self.retries + 1} attempts: {last_exc}") from last_exc


def _clamp(value: float, lo: float, hi: float, name: str) -> float:
    if value < lo or value > hi:
        log.warning("clamping %s=%s into [%s, %s]", name, value, lo, hi)
        return min(max(value, lo), hi)
    return value


def params_from_payload(payload: dict) -> FloorplanParams:
    """Build parameters from a schema-valid payload, clamping out-of-range
    numbers with warnings."""
    total_area = _clamp(float(payload["total_area"]), 10.0, 2000.0, "total_area")
    ratios = [max(0.0, float(r["ratio"])) for r in payload["rooms"]]
    ratio_sum = sum(ratios)
    if ratio_sum > 1.0:
        log.warning("normalizing room ratios summing to %.3f", ratio_sum)
        ratios = [r / ratio_sum for r in ratios]
    room_specs = tuple((str(r["type"]), ratio) for r, ratio in zip(payload["rooms"], ratios))
    weights = payload["weights"]
    anneal = payload["anneal"]
    return FloorplanParams(
        total_area=total_area,
        room_specs=room_specs,
        required_adjacencies=tuple((a, b) for a, b in payload.get("required_adjacencies", [])),
        squareness_weight=_clamp(float(weights["squareness"]), 0.0, 100.0, "squareness_weight"),
        adjacency_weight=_clamp(float(weights["adjacency"]), 0.0, 100.0, "adjacency_weight"),
        area_weight=_clamp(float(weights["area"]), 0.0, 100.0, "area_weight"),
        count_weight=_clamp(float(weights["count"]), 0.0, 100.0, "count_weight"),
        anneal=AnnealSchedule(
            initial_temp=_clamp(float(anneal["initial_temp"]), 1e-3, 100.0, "initial_temp"),
            cooling_rate=_clamp(float(anneal["cooling_rate"]), 1e-3, 0.9999, "cooling_rate"),
            steps=int(_clamp(int(anneal["steps"]), 1, 200000, "steps")),
        ),
    )


def params_from_prompt(prompt: str, client, retries: int = 2) -> FloorplanParams:
    """Ask the client for parameters and validate strictly against the JSON
    schema; invalid responses are re-requested up to ``retries`` times."""
    last_text = ""
    last_error: Exception | None = None
    for _ in range(retries + 1):
        last_text = client.send(prompt, FLOORPLAN_PARAMS_SCHEMA)
        try:
            payload = json.loads(last_text)
            jsonschema.validate(payload, FLOORPLAN_PARAMS_SCHEMA)
            return params_from_payload(payload)
        except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
            last_error = exc
    raise LlmSchemaError(f"response failed schema validation after {retries + 1} attempts: {last_error}", last_text)

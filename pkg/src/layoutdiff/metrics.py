"""Evaluation metrics: room-graph similarity, quantity success rate,
articulated-collision rate, walkable-area statistics, static collision rate,
reachability, and the category divergence between corpora.

All metrics are pure functions; corpus-level values aggregate per-scene
results in input order so reports are deterministic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import intersection_volume
from .postopt import walkable_ratio_naive
from .raster import Grid, floor_mask, footprint_mask, make_grid, rect_mask
from .scene import (
    AssetCatalog,
    FloorPlan,
    SceneLayout,
    footprint,
    functional_extension,
    resolve_assets,
)

# Intersection volumes below this count as floating-point face contact.
CONTACT_EPSILON = 1e-9

# Above this node count, edge-aware matching falls back to a greedy search.
EXACT_MATCH_LIMIT = 8


@dataclass(frozen=True)
class GraphNode:
    node_id: str
    node_type: str
    area: float


@dataclass(frozen=True)
class RoomGraph:
    nodes: tuple[GraphNode, ...]
    edges: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate graph node ids")
        known = set(ids)
        norm = []
        for a, b in self.edges:
            if a not in known or b not in known:
                raise ValueError(f"edge ({a}, {b}) references unknown node")
            norm.append((a, b))
        object.__setattr__(self, "edges", tuple(norm))
        if any(n.area < 0 for n in self.nodes):
            raise ValueError("node areas must be >= 0")

    def edge_set(self) -> set[frozenset]:
        return {frozenset(e) for e in self.edges if e[0] != e[1]}

    def types(self) -> dict[str, str]:
        return {n.node_id: n.node_type for n in self.nodes}

    @classmethod
    def from_floorplan(cls, plan: FloorPlan) -> "RoomGraph":
        nodes = tuple(GraphNode(r.room_id, r.room_type, r.area) for r in plan.rooms)
        return cls(nodes=nodes, edges=plan.doors)

    @classmethod
    def from_dict(cls, data: dict) -> "RoomGraph":
        nodes = tuple(
            GraphNode(str(n["id"]), str(n["type"]), float(n.get("area", 0.0))) for n in data["nodes"]
        )
        edges = tuple((str(a), str(b)) for a, b in data.get("edges", []))
        return cls(nodes=nodes, edges=edges)

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.node_id, "type": n.node_type, "area": float(n.area)} for n in self.nodes],
            "edges": [[a, b] for a, b in self.edges],
        }


@dataclass(frozen=True)
class NodeMatch:
    score: float
    matching: dict  # gen node id -> gt node id
    method: str  # "exact" | "greedy"


def _matched_edge_count(gen: RoomGraph, gt: RoomGraph, matching: dict) -> int:
    gt_edges = gt.edge_set()
    count = 0
    for a, b in gen.edges:
        if a in matching and b in matching and frozenset((matching[a], matching[b])) in gt_edges:
            count += 1
    return count


def _groups_by_type(graph: RoomGraph) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for node in graph.nodes:
        groups.setdefault(node.node_type, []).append(node.node_id)
    for ids in groups.values():
        ids.sort()
    return groups


def _exact_best_matching(gen: RoomGraph, gt: RoomGraph) -> dict:
    """Enumerate every maximum-cardinality type-valid matching and keep the
    one with the most matched edges (deterministic tie-break)."""
    gen_groups = _groups_by_type(gen)
    gt_groups = _groups_by_type(gt)
    per_type = []
    for t in sorted(set(gen_groups) & set(gt_groups)):
        a, b = gen_groups[t], gt_groups[t]
        m = min(len(a), len(b))
        options = [
            list(zip(combo, perm))
            for combo in itertools.combinations(a, m)
            for perm in itertools.permutations(b, m)
        ]
        per_type.append(options)

    best: dict = {}
    best_key = (-1, ())
    for pick in itertools.product(*per_type) if per_type else [()]:
        matching = {a: b for pairs in pick for a, b in pairs}
        key = (_matched_edge_count(gen, gt, matching), tuple(sorted(matching.items())))
        # prefer more matched edges; among equals keep the lexicographically
        # smallest matching so results never depend on enumeration order
        if key[0] > best_key[0] or (key[0] == best_key[0] and (not best or key[1] < best_key[1])):
            best, best_key = matching, key
    return best


def _greedy_matching(gen: RoomGraph, gt: RoomGraph) -> dict:
    """Edge-aware greedy assignment plus one swap-improvement pass."""
    gen_adj: dict[str, set[str]] = {n.node_id: set() for n in gen.nodes}
    for a, b in gen.edges:
        gen_adj[a].add(b)
        gen_adj[b].add(a)
    gt_edges = gt.edge_set()

    gen_groups = _groups_by_type(gen)
    gt_groups = _groups_by_type(gt)
    matching: dict[str, str] = {}
    for t in sorted(set(gen_groups) & set(gt_groups)):
        free = list(gt_groups[t])
        order = sorted(gen_groups[t], key=lambda n: (-len(gen_adj[n]), n))
        for node in order:
            if not free:
                break

            def gain(candidate: str) -> int:
                return sum(
                    1
                    for nb in gen_adj[node]
                    if nb in matching and frozenset((candidate, matching[nb])) in gt_edges
                )

            pick = max(free, key=lambda c: (gain(c), c))
            matching[node] = pick
            free.remove(pick)

    improved = True
    while improved:
        improved = False
        items = sorted(matching.items())
        for (u, mu), (v, mv) in itertools.combinations(items, 2):
            if gen.types()[u] != gen.types()[v]:
                continue
            before = _matched_edge_count(gen, gt, matching)
            matching[u], matching[v] = mv, mu
            if _matched_edge_count(gen, gt, matching) > before:
                improved = True
            else:
                matching[u], matching[v] = mu, mv
    return matching


def node_similarity(gen: RoomGraph, gt: RoomGraph) -> NodeMatch:
    """Maximum type-constrained matching size normalized by the larger node
    set; both-empty graphs score 1. The returned matching maximizes matched
    edges (exhaustively for small graphs, greedily above the limit)."""
    n_gen, n_gt = len(gen.nodes), len(gt.nodes)
    if n_gen == 0 and n_gt == 0:
        return NodeMatch(score=1.0, matching={}, method="exact")
    if max(n_gen, n_gt) <= EXACT_MATCH_LIMIT:
        matching = _exact_best_matching(gen, gt)
        method = "exact"
    else:
        matching = _greedy_matching(gen, gt)
        method = "greedy"
    return NodeMatch(score=len(matching) / max(n_gen, n_gt), matching=matching, method=method)


def constraint_similarity(gen: RoomGraph, gt: RoomGraph) -> float:
    """1 - 0.5 * L1 distance between per-type area-ratio distributions."""
    total_gen = sum(n.area for n in gen.nodes)
    total_gt = sum(n.area for n in gt.nodes)
    if total_gen <= 0 or total_gt <= 0:
        raise ValueError("graphs must have positive total area")
    types = sorted({n.node_type for n in gen.nodes} | {n.node_type for n in gt.nodes})
    d_l1 = 0.0
    for t in types:
        r_gen = sum(n.area for n in gen.nodes if n.node_type == t) / total_gen
        r_gt = sum(n.area for n in gt.nodes if n.node_type == t) / total_gt
        d_l1 += abs(r_gen - r_gt)
    return 1.0 - 0.5 * d_l1


def edge_similarity(gen: RoomGraph, gt: RoomGraph, matching: dict) -> float:
    """Matched-edge count normalized by the larger edge set; both-empty
    edge sets score 1."""
    gen_ids = {n.node_id for n in gen.nodes}
    gt_ids = {n.node_id for n in gt.nodes}
    for a, b in matching.items():
        if a not in gen_ids or b not in gt_ids:
            raise ValueError(f"matching references unknown nodes ({a}, {b})")
    n_gen, n_gt = len(gen.edge_set()), len(gt.edge_set())
    if n_gen == 0 and n_gt == 0:
        return 1.0
    return _matched_edge_count(gen, gt, matching) / max(n_gen, n_gt)


# ---------------------------------------------------------------------------
# Scene metrics


def sr_quantity(scenes: list[SceneLayout], n_target: int) -> float:
    if not scenes:
        raise ValueError("empty scene list")
    hits = sum(1 for s in scenes if s.occupied_count() == n_target)
    return hits / len(scenes)


def col_obj(scene: SceneLayout) -> float:
    """Fraction of occupied slots whose static box intersects another's with
    positive volume."""
    idx = scene.occupied_indices()
    if not idx:
        return 0.0
    boxes = [scene.slots[i].static_box() for i in idx]
    flagged = 0
    for a in range(len(boxes)):
        for b in range(len(boxes)):
            if a != b and intersection_volume(boxes[a], boxes[b]) > CONTACT_EPSILON:
                flagged += 1
                break
    return flagged / len(idx)


def r_acoll(scene: SceneLayout, catalog: AssetCatalog) -> float:
    """Fraction of articulated objects whose extended box overlaps any other
    object's extended box (zero when the scene has no articulated objects)."""
    records = resolve_assets(scene, catalog)
    occupied = scene.occupied_indices()
    if not occupied:
        return 0.0
    extended = {}
    articulated = []
    for i in occupied:
        rec = records[i]
        spec = rec.articulation if rec is not None else None
        extended[i] = functional_extension(scene.slots[i], spec)
        if spec is not None:
            articulated.append(i)
    if not articulated:
        return 0.0
    flagged = 0
    for j in articulated:
        for i in occupied:
            if i != j and intersection_volume(extended[i], extended[j]) > CONTACT_EPSILON:
                flagged += 1
                break
    return flagged / len(articulated)


def sr_walkable(scenes: list[SceneLayout], plans: list[FloorPlan], tau: float) -> float:
    if not scenes:
        raise ValueError("empty scene list")
    if len(scenes) != len(plans):
        raise ValueError("scenes and plans must pair up")
    hits = sum(1 for s, p in zip(scenes, plans) if walkable_ratio_naive(s, p) >= tau)
    return hits / len(scenes)


def r_reach(scene: SceneLayout, plan: FloorPlan, agent_radius: float = 0.3, cell: float = 0.05) -> float:
    """Fraction of occupied slots adjacent to the largest free-space region
    an agent of the given radius can traverse.

    The free raster is eroded by the agent radius and its largest connected
    component kept; cells there are valid agent-center positions. An object
    counts as reachable when its footprint, dilated by the agent radius plus
    one cell (the body sweep around a center position), touches that
    component.
    """
    if cell <= 0:
        raise ValueError("cell size must be positive")
    occupied = scene.occupied_indices()
    if not occupied:
        return 1.0
    grid = make_grid(plan, cell)
    floor = floor_mask(plan, grid)
    if not floor.any():
        raise ValueError("floor plan rasterized to zero cells")
    free = floor & ~footprint_mask(scene, grid)
    if not free.any():
        return 0.0
    # Erode: keep cells farther than the agent radius from any blocked cell.
    distance = ndimage.distance_transform_edt(free) * cell
    navigable = distance >= agent_radius
    if not navigable.any():
        return 0.0
    labels, n_labels = ndimage.label(navigable)
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=range(1, n_labels + 1))
    component = labels == (int(np.argmax(sizes)) + 1)

    reachable = 0
    pad = agent_radius + grid.cell
    for i in occupied:
        rect, _ = footprint(scene.slots[i])
        dilated = rect_mask((rect[0] - pad, rect[1] - pad, rect[2] + pad, rect[3] + pad), grid)
        if (dilated & component).any():
            reachable += 1
    return reachable / len(occupied)


def ckl(gen_scenes: list[SceneLayout], ref_scenes: list[SceneLayout], smoothing: float = 1e-6) -> float:
    """KL divergence between the occupied-slot category distributions of the
    generated and reference corpora (additively smoothed)."""
    if not gen_scenes or not ref_scenes:
        raise ValueError("both corpora must be non-empty")

    def counts(scenes: list[SceneLayout]) -> dict[int, int]:
        out: dict[int, int] = {}
        for scene in scenes:
            for i in scene.occupied_indices():
                c = scene.slots[i].class_id
                out[c] = out.get(c, 0) + 1
        return out

    gen_counts = counts(gen_scenes)
    ref_counts = counts(ref_scenes)
    cats = sorted(set(gen_counts) | set(ref_counts))
    if not cats:
        return 0.0
    p = np.array([gen_counts.get(c, 0) for c in cats], dtype=float)
    q = np.array([ref_counts.get(c, 0) for c in cats], dtype=float)
    p = (p / max(p.sum(), 1.0)) + smoothing
    q = (q / max(q.sum(), 1.0)) + smoothing
    p /= p.sum()
    q /= q.sum()
    return float(np.sum(p * np.log(p / q)))


# ---------------------------------------------------------------------------
# Corpus-level report


@dataclass
class MetricReport:
    """Aggregated evaluation results; graph and divergence entries are None
    when their inputs were not supplied."""

    n_scenes: int
    col_obj_mean: float
    r_walkable_mean: float
    r_acoll_mean: float
    r_reach_mean: float
    sr_walkable: dict = field(default_factory=dict)
    sr_quantity: dict = field(default_factory=dict)
    s_node: float | None = None
    s_constraint: float | None = None
    s_edge: float | None = None
    matching_method: str | None = None
    ckl: float | None = None

    def to_dict(self) -> dict:
        return {
            "n_scenes": self.n_scenes,
            "col_obj_mean": self.col_obj_mean,
            "r_walkable_mean": self.r_walkable_mean,
            "r_acoll_mean": self.r_acoll_mean,
            "r_reach_mean": self.r_reach_mean,
            "sr_walkable": {str(k): v for k, v in self.sr_walkable.items()},
            "sr_quantity": {str(k): v for k, v in self.sr_quantity.items()},
            "s_node": self.s_node,
            "s_constraint": self.s_constraint,
            "s_edge": self.s_edge,
            "matching_method": self.matching_method,
            "ckl": self.ckl,
        }

    def flat_rows(self) -> list[tuple[str, float]]:
        rows = [
            ("n_scenes", float(self.n_scenes)),
            ("col_obj_mean", self.col_obj_mean),
            ("r_walkable_mean", self.r_walkable_mean),
            ("r_acoll_mean", self.r_acoll_mean),
            ("r_reach_mean", self.r_reach_mean),
        ]
        rows += [(f"sr_walkable@{k}", v) for k, v in sorted(self.sr_walkable.items())]
        rows += [(f"sr_quantity@{k}", v) for k, v in sorted(self.sr_quantity.items())]
        for name in ("s_node", "s_constraint", "s_edge", "ckl"):
            val = getattr(self, name)
            if val is not None:
                rows.append((name, val))
        return rows


DEFAULT_TAU_GRID = tuple(round(0.60 + 0.05 * i, 2) for i in range(8))


def corpus_report(
    scenes: list[SceneLayout],
    plans: list[FloorPlan],
    catalog: AssetCatalog,
    tau_grid: tuple[float, ...] = DEFAULT_TAU_GRID,
    quantity_targets: tuple[int, ...] = (),
    graph_pairs: list[tuple[RoomGraph, RoomGraph]] | None = None,
    ref_scenes: list[SceneLayout] | None = None,
    agent_radius: float = 0.3,
    raster_cell: float = 0.05,
) -> MetricReport:
    if not scenes:
        raise ValueError("empty scene list")
    if len(scenes) != len(plans):
        raise ValueError("scenes and plans must pair up")
    report = MetricReport(
        n_scenes=len(scenes),
        col_obj_mean=float(np.mean([col_obj(s) for s in scenes])),
        r_walkable_mean=float(np.mean([walkable_ratio_naive(s, p) for s, p in zip(scenes, plans)])),
        r_acoll_mean=float(np.mean([r_acoll(s, catalog) for s in scenes])),
        r_reach_mean=float(
            np.mean([r_reach(s, p, agent_radius=agent_radius, cell=raster_cell) for s, p in zip(scenes, plans)])
        ),
        sr_walkable={tau: sr_walkable(scenes, plans, tau) for tau in tau_grid},
        sr_quantity={n: sr_quantity(scenes, n) for n in quantity_targets},
    )
    if graph_pairs:
        node_scores, cons_scores, edge_scores, methods = [], [], [], []
        for gen_graph, gt_graph in graph_pairs:
            match = node_similarity(gen_graph, gt_graph)
            node_scores.append(match.score)
            cons_scores.append(constraint_similarity(gen_graph, gt_graph))
            edge_scores.append(edge_similarity(gen_graph, gt_graph, match.matching))
            methods.append(match.method)
        report.s_node = float(np.mean(node_scores))
        report.s_constraint = float(np.mean(cons_scores))
        report.s_edge = float(np.mean(edge_scores))
        report.matching_method = "greedy" if "greedy" in methods else "exact"
    if ref_scenes:
        report.ckl = ckl(scenes, ref_scenes)
    return report

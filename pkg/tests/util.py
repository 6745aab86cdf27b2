"""Independent reference implementations used as test oracles.

Everything here recomputes results by brute force (voxelization, exhaustive
enumeration, literal formulas) without touching the code paths under test.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def voxel_box_volume(lo, hi, cell=0.01):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    counts = np.maximum(np.round((hi - lo) / cell).astype(int), 0)
    return float(np.prod(counts)) * cell**3


def voxel_occupancy(center, size, yaw, bounds_lo, bounds_hi, cell=0.01, sweep=None, sweep_depth=0.0, sweep_steps=25):
    """Boolean voxel grid covering an oriented box, optionally swept along a
    world direction. Voxels are tested at their centers."""
    bounds_lo = np.asarray(bounds_lo, dtype=float)
    bounds_hi = np.asarray(bounds_hi, dtype=float)
    ns = np.ceil((bounds_hi - bounds_lo) / cell).astype(int)
    axes = [bounds_lo[k] + (np.arange(ns[k]) + 0.5) * cell for k in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1)

    offsets = [np.zeros(3)]
    if sweep is not None and sweep_depth > 0:
        direction = np.asarray(sweep, dtype=float)
        direction = direction / np.linalg.norm(direction)
        offsets = [direction * sweep_depth * t for t in np.linspace(0.0, 1.0, sweep_steps)]

    c, s = math.cos(yaw), math.sin(yaw)
    rot_t = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])  # world -> object
    size = np.asarray(size, dtype=float)
    occ = np.zeros(pts.shape[:3], dtype=bool)
    for off in offsets:
        local = (pts - (np.asarray(center, dtype=float) + off)) @ rot_t.T
        occ |= np.all(np.abs(local) <= size + 1e-12, axis=-1)
    return occ


def voxel_iou(occ_a: np.ndarray, occ_b: np.ndarray, cell=0.01):
    inter = float(np.logical_and(occ_a, occ_b).sum()) * cell**3
    union = float(np.logical_or(occ_a, occ_b).sum()) * cell**3
    return inter / union if union > 0 else 0.0


def brute_force_graph_scores(gen_nodes, gen_edges, gt_nodes, gt_edges):
    """Exhaustive node/edge similarity for small graphs.

    ``*_nodes``: list of (id, type); ``*_edges``: list of (id, id). Returns
    (s_node, best s_edge over maximum type-valid matchings).
    """
    gen_ids = [n[0] for n in gen_nodes]
    gt_ids = [n[0] for n in gt_nodes]
    gen_type = dict(gen_nodes)
    gt_type = dict(gt_nodes)
    gt_edge_set = {frozenset(e) for e in gt_edges if e[0] != e[1]}
    gen_edge_set = {frozenset(e) for e in gen_edges if e[0] != e[1]}

    best_size = 0
    best_edges = 0
    n = len(gen_ids)
    for m in range(min(n, len(gt_ids)), -1, -1):
        found = False
        for gen_subset in itertools.combinations(gen_ids, m):
            for gt_perm in itertools.permutations(gt_ids, m):
                if any(gen_type[a] != gt_type[b] for a, b in zip(gen_subset, gt_perm)):
                    continue
                found = True
                mapping = dict(zip(gen_subset, gt_perm))
                edges = sum(
                    1
                    for e in gen_edge_set
                    if all(v in mapping for v in e) and frozenset(mapping[v] for v in e) in gt_edge_set
                )
                best_edges = max(best_edges, edges)
        if found:
            best_size = m
            break

    denom_nodes = max(len(gen_ids), len(gt_ids))
    s_node = 1.0 if denom_nodes == 0 else best_size / denom_nodes
    denom_edges = max(len(gen_edge_set), len(gt_edge_set))
    s_edge = 1.0 if denom_edges == 0 else best_edges / denom_edges
    return s_node, s_edge


def ancestral_step_reference(x_t, t, eps_hat, sched, rng):
    """Literal unguided DDPM reverse step for comparison with guided_step."""
    ab = sched.alpha_bar_t(t)
    mu = (x_t - sched.beta_t(t) / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(sched.alpha_t(t))
    if t == 1:
        return mu
    return mu + np.sqrt(sched.posterior_var_t(t)) * rng.standard_normal(mu.shape)


def posterior_mean_reference(x0, x_t, t, sched):
    """Closed-form mean of q(x_{t-1} | x_t, x_0)."""
    ab_t = sched.alpha_bar_t(t)
    ab_prev = sched.alpha_bar_t(t - 1)
    beta = sched.beta_t(t)
    alpha = sched.alpha_t(t)
    return (np.sqrt(ab_prev) * beta * x0 + np.sqrt(alpha) * (1.0 - ab_prev) * x_t) / (1.0 - ab_t)


def quadrature_eps_posterior(x_scalar, t, weights, means, variances, sched, n_grid=20001, span=12.0):
    """E[eps | x_t] in 1D by dense quadrature over x0 for a Gaussian mixture
    prior; independent of the closed-form implementation."""
    ab = sched.alpha_bar_t(t)
    x0 = np.linspace(-span, span, n_grid)
    prior = np.zeros_like(x0)
    for w, mu, var in zip(weights, means, variances):
        prior += w * np.exp(-0.5 * (x0 - mu) ** 2 / var) / np.sqrt(2 * np.pi * var)
    like = np.exp(-0.5 * (x_scalar - np.sqrt(ab) * x0) ** 2 / (1 - ab)) / np.sqrt(2 * np.pi * (1 - ab))
    post = prior * like
    post /= np.trapezoid(post, x0)
    e_x0 = np.trapezoid(post * x0, x0)
    return (x_scalar - np.sqrt(ab) * e_x0) / np.sqrt(1.0 - ab)

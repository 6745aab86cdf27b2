"""Command-line interface: train, sample, optimize, evaluate, floorplan and
export-svg subcommands.

Reproducibility contract: every command resolves an effective config (file
config, defaults, CLI overrides, command name), hashes it, and embeds that
hash plus the run seed in each artifact it writes. All randomness derives
from the run seed through named substreams, so reruns with an equal hash
produce byte-identical artifacts.

Exit codes: 0 success, 1 domain failure (threshold unmet, bad inputs at run
time), 2 usage or config error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from .codec import NormalizationSpec, normalize_scene
from .corpus import synthetic_catalog, synthetic_corpus
from .denoiser import (
    CheckpointError,
    Denoiser,
    encode_floorplan,
    load_checkpoint,
    save_checkpoint,
)
from .diffusion import (
    AdamState,
    GaussianMixture,
    GuidanceError,
    GuidedSampleConfig,
    NoiseSchedule,
    OracleDenoiser,
    TrainingError,
    generate_traced,
    make_schedule,
    train_step,
)
from .figures import (
    save_floorplan_figure,
    save_loss_curve,
    save_metric_bars,
    save_ratio_trace,
    save_walkable_sr,
)
from .floorplan import (
    HttpLlmClient,
    InfeasibleParamsError,
    LlmError,
    MockLlmClient,
    generate_floorplan,
    params_from_prompt,
)
from .guidance import (
    ArticulationClearancePotential,
    CompositeGuidance,
    GatedTerm,
    QuantityPotential,
    QuantityTarget,
)
from .metrics import RoomGraph, corpus_report
from .postopt import FloorAreaError, WalkableConfig, optimize_walkable
from .scene import (
    FloorPlan,
    SceneError,
    dump_json,
    load_catalog,
    load_floorplans,
    load_json,
    load_scene,
    save_catalog,
    scene_to_dict,
)
from .svg import save_scene_svg

log = logging.getLogger("layoutdiff")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    """Bad run configuration (maps to exit code 2)."""


DEFAULT_CONFIG: dict = {
    "seed": 0,
    "workers": 1,
    "n_max": 8,
    "paths": {
        "catalog": None,
        "floorplans": None,
        "checkpoint": None,
        "scenes": None,
        "ref_scenes": None,
        "graphs_gt": None,
        "out_dir": "out",
    },
    "schedule": {"T": 200, "beta_start": 1e-4, "beta_end": 0.02},
    "guidance": {
        "lambda": 1.0,
        "gamma_quantity": 0.0,
        "gamma_articoll": 0.0,
        "quantity_t_max": 100,
        "articoll_t_max": 10,
        "n_target": 4,
    },
    "walkable": {"tau": 0.8, "max_iters": 20, "top_k": 3, "raster_cell": 0.05},
    "sampling": {"count": 8, "oracle_mixture": None},
    "training": {
        "epochs": 4,
        "batch_size": 64,
        "lr": 2e-4,
        "hidden": 128,
        "max_grad_norm": 10.0,
        "corpus_scenes": 128,
        "corpus_plans": 4,
    },
    "evaluate": {
        "tau_grid": [0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95],
        "quantity_targets": [],
        "agent_radius": 0.3,
        "cell": 0.05,
        "thresholds": {},
    },
}

_NUM = {"type": "number"}
_STR_OR_NULL = {"type": ["string", "null"]}

RUN_CONFIG_SCHEMA: dict = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer"},
        "workers": {"type": "integer", "minimum": 1},
        "n_max": {"type": "integer", "minimum": 1},
        "paths": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "catalog": _STR_OR_NULL,
                "floorplans": _STR_OR_NULL,
                "checkpoint": _STR_OR_NULL,
                "scenes": _STR_OR_NULL,
                "ref_scenes": _STR_OR_NULL,
                "graphs_gt": _STR_OR_NULL,
                "out_dir": {"type": "string"},
            },
        },
        "schedule": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"T": {"type": "integer", "minimum": 2}, "beta_start": _NUM, "beta_end": _NUM},
        },
        "guidance": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambda": _NUM,
                "gamma_quantity": _NUM,
                "gamma_articoll": _NUM,
                "quantity_t_max": {"type": "integer"},
                "articoll_t_max": {"type": "integer"},
                "n_target": {"type": ["integer", "null"]},
            },
        },
        "walkable": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tau": _NUM,
                "max_iters": {"type": "integer", "minimum": 0},
                "top_k": {"type": "integer", "minimum": 1},
                "raster_cell": _NUM,
            },
        },
        "sampling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "count": {"type": "integer", "minimum": 1},
                "oracle_mixture": {
                    "type": ["object", "null"],
                    "additionalProperties": False,
                    "properties": {
                        "components": {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "type": "object",
                                "additionalProperties": False,
                                "required": ["weight", "mean", "var"],
                                "properties": {
                                    "weight": _NUM,
                                    "mean": {"type": ["number", "array"]},
                                    "var": _NUM,
                                },
                            },
                        }
                    },
                },
            },
        },
        "training": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "lr": _NUM,
                "hidden": {"type": "integer", "minimum": 1},
                "max_grad_norm": _NUM,
                "corpus_scenes": {"type": "integer", "minimum": 1},
                "corpus_plans": {"type": "integer", "minimum": 1},
            },
        },
        "evaluate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tau_grid": {"type": "array", "items": _NUM},
                "quantity_targets": {"type": "array", "items": {"type": "integer"}},
                "agent_radius": _NUM,
                "cell": _NUM,
                "thresholds": {"type": "object", "additionalProperties": _NUM},
            },
        },
    },
}


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | None) -> dict:
    override = {}
    if path:
        try:
            override = load_json(path)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(override, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config validation failed: {exc.message}") from exc
    return deep_merge(DEFAULT_CONFIG, override)


def config_hash(effective: dict) -> str:
    canon = json.dumps(effective, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def derive_seed(base_seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{base_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def rng_for(base_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base_seed, name))


# ---------------------------------------------------------------------------
# Shared assembly helpers


def _schedule_from(config: dict) -> NoiseSchedule:
    sc = config["schedule"]
    return make_schedule(int(sc["T"]), float(sc["beta_start"]), float(sc["beta_end"]))


def _sample_cfg_from(config: dict) -> GuidedSampleConfig:
    g = config["guidance"]
    return GuidedSampleConfig(
        guidance_scale=float(g["lambda"]),
        gamma_quantity=float(g["gamma_quantity"]),
        gamma_articoll=float(g["gamma_articoll"]),
        quantity_t_max=int(g["quantity_t_max"]),
        articoll_t_max=int(g["articoll_t_max"]),
    )


def build_guidance(config: dict, spec: NormalizationSpec, catalog) -> CompositeGuidance | None:
    g = config["guidance"]
    cfg = _sample_cfg_from(config)
    terms = []
    if cfg.gamma_quantity > 0.0:
        if g["n_target"] is None:
            raise ConfigError("guidance.n_target is required when gamma_quantity > 0")
        target = QuantityTarget(n_target=int(g["n_target"]))
        terms.append(GatedTerm(QuantityPotential(spec, target), cfg.gamma_quantity, cfg.quantity_t_max))
    if cfg.gamma_articoll > 0.0:
        terms.append(GatedTerm(ArticulationClearancePotential(spec, catalog), cfg.gamma_articoll, cfg.articoll_t_max))
    return CompositeGuidance(terms) if terms else None


def _mixture_from(config: dict, dim: int) -> GaussianMixture:
    mix = config["sampling"]["oracle_mixture"] or {"components": [{"weight": 1.0, "mean": 0.0, "var": 1.0}]}
    comps = mix["components"]
    weights = np.array([c["weight"] for c in comps], dtype=float)
    means = np.vstack(
        [np.full(dim, float(c["mean"])) if np.isscalar(c["mean"]) else np.asarray(c["mean"], dtype=float) for c in comps]
    )
    variances = np.array([c["var"] for c in comps], dtype=float)
    return GaussianMixture(weights=weights, means=means, variances=variances)


def _load_catalog_or_default(config: dict, out_dir: Path):
    path = config["paths"]["catalog"]
    if path:
        return load_catalog(path)
    catalog = synthetic_catalog()
    out_dir.mkdir(parents=True, exist_ok=True)
    save_catalog(catalog, out_dir / "catalog.json")
    log.info("no catalog given; wrote synthetic catalog to %s", out_dir / "catalog.json")
    return catalog


def _require_floorplans(config: dict) -> list[FloorPlan]:
    path = config["paths"]["floorplans"]
    if not path:
        raise ConfigError("paths.floorplans is required for this command")
    plans = load_floorplans(path)
    if not plans:
        raise ConfigError(f"no floor plans found at {path}")
    return plans


def _plan_index(plans: list[FloorPlan]) -> dict[str, FloorPlan]:
    return {p.plan_id: p for p in plans}


def _load_scene_dir(path: str) -> list[tuple[str, object]]:
    p = Path(path)
    files = sorted(p.glob("*.json")) if p.is_dir() else [p]
    scenes = [(f.name, load_scene(f)) for f in files]
    if not scenes:
        raise ConfigError(f"no scenes found at {path}")
    return scenes


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# train


def cmd_train(args, config: dict) -> int:
    effective = {"command": "train", "config": config, "resume": args.resume}
    run_hash = config_hash(effective)
    seed = int(config["seed"])
    out_dir = Path(config["paths"]["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    catalog = _load_catalog_or_default(config, out_dir)
    n_max = int(config["n_max"])
    tr = config["training"]

    if config["paths"]["scenes"]:
        plans = _require_floorplans(config)
        by_id = _plan_index(plans)
        scenes = []
        scene_plans = []
        for _, scene in _load_scene_dir(config["paths"]["scenes"]):
            if scene.floorplan_id not in by_id:
                raise SceneError(f"scene references unknown floor plan {scene.floorplan_id}")
            scenes.append(scene)
            scene_plans.append(by_id[scene.floorplan_id])
    else:
        scenes, scene_plans = synthetic_corpus(
            catalog, int(tr["corpus_scenes"]), n_max, derive_seed(seed, "corpus"), n_plans=int(tr["corpus_plans"])
        )
    if not scenes:
        raise SceneError("training corpus is empty")

    # Encode per plan; batches stay plan-homogeneous so guidance decodes with
    # the right codec.
    groups: dict[str, dict] = {}
    for scene, plan in zip(scenes, scene_plans):
        spec = NormalizationSpec.for_floorplan(plan, catalog, n_max)
        entry = groups.setdefault(plan.plan_id, {"spec": spec, "cond": encode_floorplan(plan), "x0": []})
        entry["x0"].append(normalize_scene(scene, spec))
    for entry in groups.values():
        entry["x0"] = np.vstack(entry["x0"])

    state_dim = next(iter(groups.values()))["spec"].state_dim
    sched = _schedule_from(config)

    start_epoch = 0
    if args.resume:
        model, extra_arrays, extra_meta = load_checkpoint(args.resume)
        if model.state_dim != state_dim:
            raise CheckpointError(
                f"checkpoint state dim {model.state_dim} != corpus state dim {state_dim}"
            )
        adam = AdamState.for_params(model.params())
        for i in range(len(adam.m)):
            adam.m[i] = extra_arrays[f"adam_m_{i}"]
            adam.v[i] = extra_arrays[f"adam_v_{i}"]
        adam.step = int(extra_meta.get("adam_step", 0))
        start_epoch = int(extra_meta.get("epoch", 0))
        loss_rows = [tuple(r) for r in extra_meta.get("loss_rows", [])]
    else:
        model = Denoiser(state_dim, hidden=int(tr["hidden"]), rng=rng_for(seed, "init"))
        adam = AdamState.for_params(model.params())
        loss_rows = []

    guidance_by_plan = {pid: build_guidance(config, entry["spec"], catalog) for pid, entry in groups.items()}
    lam = float(config["guidance"]["lambda"])
    batch_size = int(tr["batch_size"])

    for epoch in range(start_epoch, int(tr["epochs"])):
        rng_e = rng_for(seed, f"train:{epoch}")
        epoch_losses = []
        for pid in sorted(groups):
            entry = groups[pid]
            x0 = entry["x0"]
            order = rng_e.permutation(len(x0))
            for lo in range(0, len(x0), batch_size):
                idx = order[lo : lo + batch_size]
                conds = np.tile(entry["cond"], (len(idx), 1))
                loss = train_step(
                    model,
                    x0[idx],
                    conds,
                    guidance_by_plan[pid],
                    lam,
                    sched,
                    rng_e,
                    adam,
                    lr=float(tr["lr"]),
                    max_grad_norm=float(tr["max_grad_norm"]),
                )
                epoch_losses.append(loss)
        epoch_loss = float(np.mean(epoch_losses))
        loss_rows.append((epoch, epoch_loss))
        log.info("epoch %d loss %.6f", epoch, epoch_loss)

        extra_arrays = {}
        for i, (m, v) in enumerate(zip(adam.m, adam.v)):
            extra_arrays[f"adam_m_{i}"] = m
            extra_arrays[f"adam_v_{i}"] = v
        save_checkpoint(
            out_dir / "checkpoint.npz",
            model,
            extra_arrays=extra_arrays,
            extra_meta={
                "epoch": epoch + 1,
                "adam_step": adam.step,
                "schedule": config["schedule"],
                "n_max": n_max,
                "n_classes": catalog.n_classes,
                "latent_dim": catalog.latent_dim,
                "config_hash": run_hash,
                "seed": seed,
                "loss_rows": [[int(e), float(l)] for e, l in loss_rows],
            },
        )

    _write_csv(out_dir / "loss.csv", ["epoch", "loss"], [[e, repr(l)] for e, l in loss_rows])
    save_loss_curve(loss_rows, out_dir / "loss.png")
    print(f"trained {int(tr['epochs']) - start_epoch} epochs, final loss {loss_rows[-1][1]:.6f}")
    print(f"checkpoint: {out_dir / 'checkpoint.npz'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sample


def _sample_one(task) -> dict:
    (index, plan, catalog, config, run_hash, use_oracle, model_blob) = task
    seed = int(config["seed"])
    n_max = int(config["n_max"])
    spec = NormalizationSpec.for_floorplan(plan, catalog, n_max)
    sched = _schedule_from(config)
    if use_oracle:
        denoiser = OracleDenoiser(_mixture_from(config, spec.state_dim), sched)
    else:
        denoiser = model_blob.bind(encode_floorplan(plan))
    guidance = build_guidance(config, spec, catalog)
    cfg = _sample_cfg_from(config)
    scene_seed = derive_seed(seed, f"sample:{index}")
    rng = np.random.default_rng(scene_seed)
    scene, trace = generate_traced(denoiser, plan, guidance, cfg, sched, rng, spec, seed=scene_seed)
    payload = scene_to_dict(scene)
    payload["config_hash"] = run_hash
    return {
        "index": index,
        "payload": payload,
        "floorplan_id": plan.plan_id,
        "scene_seed": scene_seed,
        "guidance": trace.summary(),
    }


def cmd_sample(args, config: dict) -> int:
    if args.count is not None:
        config["sampling"]["count"] = int(args.count)
    use_oracle = bool(args.oracle_mixture)
    effective = {"command": "sample", "config": config, "oracle": use_oracle}
    run_hash = config_hash(effective)
    seed = int(config["seed"])
    out_dir = Path(config["paths"]["out_dir"])
    scenes_dir = out_dir / "scenes"
    scenes_dir.mkdir(parents=True, exist_ok=True)

    catalog = _load_catalog_or_default(config, out_dir)
    plans = _require_floorplans(config)

    model = None
    if not use_oracle:
        path = config["paths"]["checkpoint"]
        if not path or not Path(path).exists():
            raise CheckpointError(f"checkpoint not found: {path} (or pass --oracle-mixture)")
        model, _, _ = load_checkpoint(path)

    count = int(config["sampling"]["count"])
    tasks = [
        (i, plans[i % len(plans)], catalog, config, run_hash, use_oracle, model) for i in range(count)
    ]
    workers = int(config["workers"])
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sample_one, tasks))
    else:
        results = [_sample_one(t) for t in tasks]
    results.sort(key=lambda r: r["index"])

    manifest = {"command": "sample", "config_hash": run_hash, "seed": seed, "count": count, "scenes": []}
    for res in results:
        name = f"scene_{res['index']:05d}.json"
        dump_json(res["payload"], scenes_dir / name)
        manifest["scenes"].append(
            {
                "file": f"scenes/{name}",
                "index": res["index"],
                "scene_seed": res["scene_seed"],
                "floorplan_id": res["floorplan_id"],
                "guidance": res["guidance"],
            }
        )
    dump_json(manifest, out_dir / "manifest.json")
    print(f"wrote {count} scenes to {scenes_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# optimize


def cmd_optimize(args, config: dict) -> int:
    if args.scenes:
        config["paths"]["scenes"] = args.scenes
    if args.tau is not None:
        config["walkable"]["tau"] = float(args.tau)
    effective = {"command": "optimize", "config": config}
    run_hash = config_hash(effective)
    seed = int(config["seed"])
    out_dir = Path(config["paths"]["out_dir"])
    opt_dir = out_dir / "optimized"
    opt_dir.mkdir(parents=True, exist_ok=True)

    if not config["paths"]["scenes"]:
        raise ConfigError("paths.scenes is required for optimize")
    catalog = _load_catalog_or_default(config, out_dir)
    plans = _plan_index(_require_floorplans(config))
    wc = config["walkable"]
    cfg = WalkableConfig(
        tau=float(wc["tau"]), max_iters=int(wc["max_iters"]), top_k=int(wc["top_k"]), raster_cell=float(wc["raster_cell"])
    )

    rows = []
    traces = {}
    summary = {"command": "optimize", "config_hash": run_hash, "seed": seed, "tau": cfg.tau, "scenes": []}
    all_reached = True
    for name, scene in _load_scene_dir(config["paths"]["scenes"]):
        if scene.floorplan_id not in plans:
            raise SceneError(f"scene {name} references unknown floor plan {scene.floorplan_id}")
        plan = plans[scene.floorplan_id]
        result = optimize_walkable(scene, plan, catalog, cfg, record_raster=True)
        payload = scene_to_dict(result.scene)
        payload["config_hash"] = run_hash
        dump_json(payload, opt_dir / name)
        for row in result.trace:
            rows.append([name, row["iter"], repr(row["ratio"]), row["replacements"], repr(row["raster_ratio"])])
        traces[name] = result.trace
        summary["scenes"].append(
            {
                "file": name,
                "status": result.status,
                "iterations": result.iterations,
                "final_ratio": result.final_ratio,
            }
        )
        all_reached &= result.final_ratio >= cfg.tau
    _write_csv(out_dir / "trace.csv", ["scene", "iter", "ratio", "replacements", "raster_ratio"], rows)
    dump_json(summary, out_dir / "optimize_report.json")
    save_ratio_trace(traces, cfg.tau, out_dir / "trace.png")
    reached = sum(1 for s in summary["scenes"] if s["final_ratio"] >= cfg.tau)
    print(f"optimized {len(summary['scenes'])} scenes; {reached} reached tau={cfg.tau}")
    return EXIT_OK if all_reached else EXIT_DOMAIN


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(args, config: dict) -> int:
    if args.scenes:
        config["paths"]["scenes"] = args.scenes
    if args.graphs_gt:
        config["paths"]["graphs_gt"] = args.graphs_gt
    if args.ref_scenes:
        config["paths"]["ref_scenes"] = args.ref_scenes
    effective = {"command": "evaluate", "config": config}
    run_hash = config_hash(effective)
    seed = int(config["seed"])
    out_dir = Path(config["paths"]["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    if not config["paths"]["scenes"]:
        raise ConfigError("paths.scenes is required for evaluate")
    catalog = _load_catalog_or_default(config, out_dir)
    plans = _plan_index(_require_floorplans(config))

    scenes = []
    scene_plans = []
    for name, scene in _load_scene_dir(config["paths"]["scenes"]):
        if scene.floorplan_id not in plans:
            raise SceneError(f"scene {name} references unknown floor plan {scene.floorplan_id}")
        scenes.append(scene)
        scene_plans.append(plans[scene.floorplan_id])

    graph_pairs = None
    if config["paths"]["graphs_gt"]:
        gt_dir = Path(config["paths"]["graphs_gt"])
        graph_pairs = []
        seen = []
        for plan in scene_plans:
            if plan.plan_id in seen:
                continue
            seen.append(plan.plan_id)
            gt_file = gt_dir / f"{plan.plan_id}.json"
            if gt_file.exists():
                graph_pairs.append((RoomGraph.from_floorplan(plan), RoomGraph.from_dict(load_json(gt_file))))
        if not graph_pairs:
            log.warning("no ground-truth graphs matched plan ids in %s", gt_dir)
            graph_pairs = None

    ref_scenes = None
    if config["paths"]["ref_scenes"]:
        ref_scenes = [s for _, s in _load_scene_dir(config["paths"]["ref_scenes"])]

    ev = config["evaluate"]
    report = corpus_report(
        scenes,
        scene_plans,
        catalog,
        tau_grid=tuple(float(t) for t in ev["tau_grid"]),
        quantity_targets=tuple(int(n) for n in ev["quantity_targets"]),
        graph_pairs=graph_pairs,
        ref_scenes=ref_scenes,
        agent_radius=float(ev["agent_radius"]),
        raster_cell=float(ev["cell"]),
    )

    payload = {"command": "evaluate", "config_hash": run_hash, "seed": seed, "report": report.to_dict()}
    dump_json(payload, out_dir / "report.json")
    rows = report.flat_rows()
    _write_csv(out_dir / "metrics.csv", ["metric", "value"], [[k, repr(v)] for k, v in rows])
    save_metric_bars(rows, out_dir / "metrics.png")
    save_walkable_sr(report.sr_walkable, out_dir / "walkable_sr.png")

    failed = []
    for metric, minimum in sorted(config["evaluate"]["thresholds"].items()):
        value = dict(rows).get(metric)
        if value is None or value < float(minimum):
            failed.append((metric, value, minimum))
    for metric, value, minimum in failed:
        log.error("threshold unmet: %s=%s < %s", metric, value, minimum)
    print(f"evaluated {report.n_scenes} scenes; report: {out_dir / 'report.json'}")
    return EXIT_DOMAIN if failed else EXIT_OK


# ---------------------------------------------------------------------------
# floorplan


def cmd_floorplan(args, config: dict) -> int:
    effective = {
        "command": "floorplan",
        "config": config,
        "prompt": args.prompt,
        "mock": bool(args.mock_llm),
        "out": args.out,
    }
    run_hash = config_hash(effective)
    seed = int(config["seed"])

    client = MockLlmClient() if args.mock_llm else HttpLlmClient.from_env()
    params = params_from_prompt(args.prompt, client)
    plan, graph, energy = generate_floorplan(params, seed=seed)

    payload = {"config_hash": run_hash, "seed": seed, **_plan_payload(plan)}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dump_json(payload, out)
    if args.graph_out:
        dump_json({"config_hash": run_hash, "seed": seed, **graph.to_dict()}, args.graph_out)
    if args.fig:
        save_floorplan_figure(plan, args.fig)
    print(f"floor plan with {len(plan.rooms)} rooms, energy {energy:.4f} -> {out}")
    return EXIT_OK


def _plan_payload(plan: FloorPlan) -> dict:
    from .scene import floorplan_to_dict

    return floorplan_to_dict(plan)


# ---------------------------------------------------------------------------
# export-svg


def cmd_export_svg(args, config: dict) -> int:
    plan = load_floorplans(args.plan)[0]
    scene = load_scene(args.scene) if args.scene else None
    catalog = load_catalog(args.catalog) if args.catalog else None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_scene_svg(scene, plan, out, catalog=catalog, shade_walkable=args.shade_walkable)
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layoutdiff", description="Guided-diffusion indoor scene layouts")
    parser.add_argument("--config", help="run config JSON (validated against the built-in schema)")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--workers", type=int, help="override worker count")
    parser.add_argument("--out", help="override output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the denoiser on scene data or the synthetic corpus")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--epochs", type=int, help="override training.epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate scenes with the guided reverse process")
    p.add_argument("--count", type=int, help="number of scenes")
    p.add_argument("--oracle-mixture", action="store_true", help="use the closed-form mixture denoiser")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("optimize", help="walkable-area replacement optimization")
    p.add_argument("--scenes", help="scene JSON file or directory")
    p.add_argument("--tau", type=float, help="walkable-ratio target")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="compute the metric report for a scene corpus")
    p.add_argument("--scenes", help="scene JSON file or directory")
    p.add_argument("--graphs-gt", help="directory of ground-truth room graphs named <plan_id>.json")
    p.add_argument("--ref-scenes", help="reference corpus for the category divergence")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("floorplan", help="prompt-driven annealed floor plan")
    p.add_argument("--prompt", required=True)
    p.add_argument("--mock-llm", action="store_true", help="use the deterministic rule-based client")
    p.add_argument("--out", required=True)
    p.add_argument("--graph-out", help="also write the room graph JSON")
    p.add_argument("--fig", help="also render a PNG figure")
    p.set_defaults(func=cmd_floorplan)

    p = sub.add_parser("export-svg", help="render a scene over its floor plan")
    p.add_argument("--scene", help="scene JSON (omit to draw the bare plan)")
    p.add_argument("--plan", required=True)
    p.add_argument("--catalog", help="catalog JSON for articulation outlines")
    p.add_argument("--shade-walkable", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_svg)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config["seed"] = args.seed
        if args.workers is not None:
            config["workers"] = args.workers
        if args.out is not None:
            config["paths"]["out_dir"] = args.out
        if getattr(args, "epochs", None) is not None:
            config["training"]["epochs"] = args.epochs
        return args.func(args, config)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (
        SceneError,
        CheckpointError,
        GuidanceError,
        TrainingError,
        FloorAreaError,
        InfeasibleParamsError,
        LlmError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        log.error("%s", exc)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())

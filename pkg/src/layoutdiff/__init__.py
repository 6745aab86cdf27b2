"""Guided-diffusion synthesis of 2.5D indoor scene layouts.

The library generates oriented object boxes on a floor plan with a DDPM
whose reverse process is steered by differentiable constraints (object
quantity, articulated-part clearance), refines walkable area by catalog
replacement, and scores results with a full metric suite. The ``layoutdiff``
CLI wires the pieces together.
"""

from .codec import NormalizationSpec, clear_empty_slots, denormalize_scene, normalize_scene
from .corpus import single_room_plan, synthetic_catalog, synthetic_corpus, synthetic_scene
from .denoiser import Denoiser, encode_floorplan, load_checkpoint, save_checkpoint
from .diffusion import (
    AdamState,
    GaussianMixture,
    GuidedSampleConfig,
    NoiseSchedule,
    OracleDenoiser,
    denoising_loss_and_grads,
    forward_sample,
    generate,
    generate_traced,
    guided_step,
    make_schedule,
    oracle_eps,
    posterior_params,
    train_step,
)
from .floorplan import (
    AnnealSchedule,
    FloorplanParams,
    HttpLlmClient,
    MockLlmClient,
    generate_floorplan,
    layout_energy,
    params_from_prompt,
)
from .guidance import (
    ArticulationClearancePotential,
    CompositeGuidance,
    GatedTerm,
    QuantityPotential,
    QuantityTarget,
    articulation_overlap_loss,
    check_gradient,
    derive_emptiness,
    quantity_loss,
)
from .metrics import (
    MetricReport,
    RoomGraph,
    ckl,
    col_obj,
    constraint_similarity,
    corpus_report,
    edge_similarity,
    node_similarity,
    r_acoll,
    r_reach,
    sr_quantity,
    sr_walkable,
)
from .postopt import WalkableConfig, optimize_walkable, walkable_ratio_naive, walkable_ratio_raster
from .scene import (
    ArticulationSpec,
    AssetCatalog,
    AssetRecord,
    FloorPlan,
    ObjectSlot,
    Room,
    SceneLayout,
    footprint,
    functional_extension,
    nearest_asset,
    resolve_assets,
)
from .svg import save_scene_svg, scene_svg

__version__ = "0.1.0"

"""Procedural liver tumor synthesis in CT volumes, with paired labels,
segmentation/detection metrics, and robustness benchmark tooling."""

from .volume import LabelVolume, ScalarVolume, SoftMask, same_geometry
from .nifti import load_label, load_nifti, load_scalar, save_nifti
from .kernels import (
    ComponentSet,
    connected_components,
    gaussian_blur,
    sample_trilinear,
)
from .params import GenConfig, PRESETS, SizePreset, TumorSpec, substream
from .vessels import ParenchymaStats, estimate_parenchyma_stats, segment_vessels
from .placement import PlacementRequest, collision_free, sample_location
from .texture import TextureParams, generate_noise, generate_texture, upscale_cubic
from .shape import ShapeParams, elastic_deform, ellipsoid_mask, soft_edge
from .composite import (
    BulgeParams,
    CapsuleParams,
    apply_capsule,
    blend_tumor,
    mass_effect_warp,
)
from .generator import (
    ProvenanceRecord,
    TumorResult,
    implant_tumor,
    replay,
    synthesize,
    synthesize_with_spec,
)
from .metrics import (
    DetectionReport,
    SegScores,
    TuringCounts,
    TuringTally,
    detect,
    dsc,
    nsd,
    seg_scores,
    turing_metrics,
)
from .benchgrid import GridManifest, build_grid, evaluate_grid
from .phantoms import add_rod, make_phantom

__version__ = "0.1.0"

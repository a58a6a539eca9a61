"""Semantic-aware camera-to-BEV feature pooling.

The pipeline: build a frustum lattice of virtual points from camera
feature cells and depth bins, project it into the ego frame, attach
per-point depth and foreground scores plus context features, drop points
failing either score threshold, and scatter-sum the survivors into a
pillarized BEV grid. On top of that sit a paste augmentation that adds two
frames' pooled grids (after extra geometric augmentation of the pasted
frame's points and boxes) and the forward math of a two-scale gated
cross-task head with its supervision losses.
"""

from .geometry import (
    BevConfig,
    Boxes3D,
    Camera,
    CameraRig,
    DepthBins,
    build_frustum,
    cam_to_ego,
    flat_pillar_ids,
    pillar_indices,
    pillar_of,
    ring_rig,
)
from .scoring import (
    BranchWeights,
    ConvWeights,
    LabelMaps,
    LossWeights,
    depth_labels_from_points,
    depth_loss,
    mtd_fuse,
    nearest_upsample2x,
    seg_labels_from_points,
    seg_loss,
    sigmoid_gate,
    softmax_over_depth,
    total_loss,
    upsample_fuse,
)
from .pooling import (
    PoolConfig,
    PoolingIndex,
    VirtualPoints,
    build_index,
    filter_gate,
    pool_fast,
    pool_reference,
    score_points,
    select_valid,
    valid_fraction,
)
from .augment import (
    BdaParams,
    ImageAugParams,
    PastePlan,
    apply_bda_boxes,
    apply_bda_points,
    bev_paste,
    sample_bda,
    sample_image_aug,
    sample_paste_plan,
)
from .synth import (
    RenderedView,
    ScenePlacementError,
    SceneSpec,
    gen_scene,
    render_views,
    sample_point_cloud,
)
from .gridio import export_grid, read_grid, render_norm_image

__version__ = "0.1.0"

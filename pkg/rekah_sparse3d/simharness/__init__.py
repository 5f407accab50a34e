"""synthetic scenes, simulated detector and the self-training experiment"""

from rekah_sparse3d.simharness.simharness_utils import (
    MASK_NOISE_MODES,
    REPORT_COLUMNS,
    DetectorNoise,
    EpochRow,
    ExperimentReport,
    SceneSpec,
    SyntheticScene,
    apply_mask_noise,
    approximate_mask_boundary,
    dilate_mask,
    erode_mask,
    generate_scene,
    kitti_like_rig,
    lane_mask,
    object_mask,
    render_scene_image,
    run_experiment,
    run_experiment_async,
    scene_patch_library,
    simulate_predictions,
    true_object_feature,
)

__all__ = [
    "MASK_NOISE_MODES",
    "REPORT_COLUMNS",
    "DetectorNoise",
    "EpochRow",
    "ExperimentReport",
    "SceneSpec",
    "SyntheticScene",
    "apply_mask_noise",
    "approximate_mask_boundary",
    "dilate_mask",
    "erode_mask",
    "generate_scene",
    "kitti_like_rig",
    "lane_mask",
    "object_mask",
    "render_scene_image",
    "run_experiment",
    "run_experiment_async",
    "scene_patch_library",
    "simulate_predictions",
    "true_object_feature",
]

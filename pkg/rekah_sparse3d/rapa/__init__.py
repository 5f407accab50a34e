"""road-aware patch augmentation"""

from rekah_sparse3d.rapa.rapa_utils import (
    AugmentResult,
    ObjectPatch,
    Placement,
    RapaConfig,
    augment_scene,
    build_patch_library,
    composite_patch,
    extract_patch_candidates,
    find_placement,
    is_patch_candidate,
    max_overlap_with_existing,
    read_patch,
    read_patch_file,
    road_overlap_ratio,
    search_placement,
    source_alpha,
    validate_placement,
    write_patch,
    write_patch_file,
)

__all__ = [
    "AugmentResult",
    "ObjectPatch",
    "Placement",
    "RapaConfig",
    "augment_scene",
    "build_patch_library",
    "composite_patch",
    "extract_patch_candidates",
    "find_placement",
    "is_patch_candidate",
    "max_overlap_with_existing",
    "read_patch",
    "read_patch_file",
    "road_overlap_ratio",
    "search_placement",
    "source_alpha",
    "validate_placement",
    "write_patch",
    "write_patch_file",
]

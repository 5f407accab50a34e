"""road-aware patch augmentation

this module contains:
- patch library: candidate filter, crops with object-mask alpha, .patch I/O
- placement search: extrinsic center transform, horizontal offset grid,
  rotation update keeping the observation angle, road and overlap constraints
- compositing: bilinear resize + alpha-over, far-to-near per scene

placement trial order (first failing check rejects the trial):
  depth range -> projectable -> nonempty bbox -> road ratio -> overlap
"""

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np
from skimage.transform import resize

from rekah_sparse3d.geometry.geometry_utils import (
    BBox2D,
    CameraRig,
    Label3D,
    Vec3,
    alpha_from_rotation,
    apply_horizontal_offset,
    box3d_corners,
    iou2d,
    project_box,
    rotation_from_alpha,
    transform_center,
    viewing_angle,
    wrap_angle,
)
from rekah_sparse3d.kitti_io.kitti_io_utils import MaskRaster, decode_patch, encode_patch
from rekah_sparse3d.utils.errors_utils import BehindCameraError, FormatError, ValidationError
from rekah_sparse3d.utils.logging_utils import Logger
from rekah_sparse3d.utils.rng_utils import derive_seed, make_rng

ALPHA_TOL = 1e-9


@dataclass(frozen=True)
class RapaConfig:
    delta: float = 5.0
    num_offsets: int = 10
    tau_road: float = 0.7
    tau_overlap: float = 0.1
    n_max: int = 40
    depth_min: float = 2.0
    depth_max: float = 65.0
    patches_per_image: int = 2
    class_name: str = "Car"

    def __post_init__(self):
        if not self.delta > 0.0:
            raise ValidationError(f"delta must be > 0, got {self.delta}")
        if self.num_offsets < 1:
            raise ValidationError(f"num_offsets must be >= 1, got {self.num_offsets}")
        if not 0.0 < self.tau_road <= 1.0:
            raise ValidationError(f"tau_road must be in (0, 1], got {self.tau_road}")
        if not 0.0 <= self.tau_overlap < 1.0:
            raise ValidationError(f"tau_overlap must be in [0, 1), got {self.tau_overlap}")
        if self.n_max < 1:
            raise ValidationError(f"n_max must be >= 1, got {self.n_max}")
        if not self.depth_min < self.depth_max:
            raise ValidationError(f"depth_min {self.depth_min} must be < depth_max {self.depth_max}")
        if self.patches_per_image < 0:
            raise ValidationError(f"patches_per_image must be >= 0, got {self.patches_per_image}")

    def offsets(self) -> np.ndarray:
        """m evenly spaced lateral offsets over [-delta, delta]"""
        return np.linspace(-self.delta, self.delta, self.num_offsets)


@dataclass(eq=False)
class ObjectPatch:
    """RGBA crop of one annotated object; alpha is its foreground mask"""

    raster: np.ndarray
    source_label: Label3D
    source_rig: CameraRig
    source_image_id: str
    # label index in the source scene; not stored in the .patch container
    source_index: Optional[int] = None

    def __post_init__(self):
        self.raster = np.asarray(self.raster, dtype=np.uint8)
        if self.raster.ndim != 3 or self.raster.shape[2] != 4 or self.raster.size == 0:
            raise ValidationError(f"patch raster must be a nonempty HxWx4 array, got {self.raster.shape}")
        if not np.any(self.raster[..., 3]):
            raise ValidationError("patch alpha channel is empty")

    @property
    def depth(self) -> float:
        return self.source_label.location.z


@dataclass(frozen=True)
class Placement:
    label: Label3D
    x_offset: float
    road_ratio: float
    max_existing_iou: float


@dataclass
class AugmentResult:
    image: np.ndarray
    labels: List[Label3D]
    placements: List[Placement] = field(default_factory=list)
    # patch pasted for each placement, same order
    patches: List[ObjectPatch] = field(default_factory=list)
    attempted: int = 0
    trials: int = 0

    @property
    def accepted(self) -> int:
        return len(self.placements)


# ═══════════════════════════════════════════════════════════════════════════
# patch library
# ═══════════════════════════════════════════════════════════════════════════


def is_patch_candidate(label: Label3D, cfg: RapaConfig = None) -> bool:
    cfg = cfg or RapaConfig()
    return (
        label.class_name == cfg.class_name
        and label.truncation == 0.0
        and label.occlusion == 0
        and cfg.depth_min <= label.location.z < cfg.depth_max
    )


def extract_patch_candidates(labels: Sequence[Label3D], cfg: RapaConfig = None) -> List[Label3D]:
    """fully visible, untruncated cars inside the depth range"""
    return [label for label in labels if is_patch_candidate(label, cfg)]


def _pixel_rect(bbox: BBox2D, width: int, height: int) -> Tuple[int, int, int, int]:
    """(col0, row0, col1, row1) covering bbox, clamped to the raster"""
    col0 = min(max(math.floor(bbox.left), 0), width)
    row0 = min(max(math.floor(bbox.top), 0), height)
    col1 = min(max(math.ceil(bbox.right), 0), width)
    row1 = min(max(math.ceil(bbox.bottom), 0), height)
    return col0, row0, col1, row1


def build_patch_library(
    image: np.ndarray,
    labels: Sequence[Label3D],
    rig: CameraRig,
    image_id: str,
    object_masks: Optional[Mapping[int, MaskRaster]] = None,
    cfg: RapaConfig = None,
) -> List[ObjectPatch]:
    """crop every extraction candidate of one image

    Args:
        image: HxWx4 RGBA scene
        labels: all labels of the scene (indices key object_masks)
        rig: camera of the scene
        image_id: source image id recorded on each patch
        object_masks: full-image foreground mask per label index
        cfg: candidate filter parameters

    Returns:
        patches in label order
    """
    object_masks = object_masks or {}
    height, width = image.shape[:2]
    patches = []
    for index, label in enumerate(labels):
        if not is_patch_candidate(label, cfg):
            continue
        col0, row0, col1, row1 = _pixel_rect(label.bbox2d, width, height)
        if col1 <= col0 or row1 <= row0:
            Logger.instance().warning(f"{image_id}#{index}: 2D box is empty after clamping, skipped")
            continue

        raster = np.array(image[row0:row1, col0:col1], dtype=np.uint8)
        mask = object_masks.get(index)
        if mask is None:
            Logger.instance().warning(f"{image_id}#{index}: no object mask, using an opaque crop")
            raster[..., 3] = 255
        else:
            if (mask.width, mask.height) != (width, height):
                raise FormatError(
                    f"{image_id}#{index}: mask is {mask.width}x{mask.height}, image is {width}x{height}"
                )
            raster[..., 3] = mask.data[row0:row1, col0:col1]
            if not np.any(raster[..., 3]):
                Logger.instance().warning(f"{image_id}#{index}: object mask is empty inside the box, skipped")
                continue
        patches.append(
            ObjectPatch(
                raster=raster, source_label=label, source_rig=rig, source_image_id=image_id, source_index=index
            )
        )
    return patches


def write_patch(patch: ObjectPatch) -> bytes:
    return encode_patch(patch.raster, patch.source_image_id, patch.source_label, patch.source_rig)


def read_patch(data: bytes) -> ObjectPatch:
    record = decode_patch(data)
    return ObjectPatch(
        raster=record.pixels,
        source_label=record.label,
        source_rig=record.rig,
        source_image_id=record.image_id,
    )


def write_patch_file(path, patch: ObjectPatch) -> None:
    Path(path).write_bytes(write_patch(patch))


def read_patch_file(path) -> ObjectPatch:
    return read_patch(Path(path).read_bytes())


# ═══════════════════════════════════════════════════════════════════════════
# placement constraints
# ═══════════════════════════════════════════════════════════════════════════


def road_overlap_ratio(bbox: BBox2D, mask: MaskRaster) -> float:
    """share of road pixels inside the integer-rasterized bbox"""
    col0, row0, col1, row1 = _pixel_rect(bbox, mask.width, mask.height)
    if col1 <= col0 or row1 <= row0:
        return 0.0
    window = mask.foreground[row0:row1, col0:col1]
    return float(np.count_nonzero(window)) / float(window.size)


def max_overlap_with_existing(bbox: BBox2D, existing: Sequence[BBox2D]) -> float:
    return max((iou2d(bbox, other) for other in existing), default=0.0)


def source_alpha(label: Label3D) -> float:
    """observation angle of the source label

    values outside [-pi, pi] (the devkit uses -10 for unknown) are derived
    from rotation_y and the source viewing angle instead.
    """
    if -math.pi <= label.alpha <= math.pi:
        return wrap_angle(label.alpha)
    theta = viewing_angle(label.location.x, label.location.z)
    return alpha_from_rotation(label.rotation_y, theta)


def _try_offset(
    base: Label3D,
    center: Vec3,
    alpha: float,
    x_offset: float,
    tgt_rig: CameraRig,
    road_mask: MaskRaster,
    existing: Sequence[BBox2D],
    cfg: RapaConfig,
) -> Optional[Placement]:
    moved = apply_horizontal_offset(center, x_offset)
    if not cfg.depth_min <= moved.z < cfg.depth_max:
        return None
    theta = viewing_angle(moved.x, moved.z)
    candidate = replace(base, location=moved, rotation_y=rotation_from_alpha(alpha, theta), alpha=alpha)
    try:
        bbox = project_box(box3d_corners(candidate), tgt_rig)
    except BehindCameraError:
        return None
    if bbox.area <= 0.0:
        return None
    ratio = road_overlap_ratio(bbox, road_mask)
    if ratio < cfg.tau_road:
        return None
    overlap = max_overlap_with_existing(bbox, existing)
    if overlap >= cfg.tau_overlap:
        return None
    return Placement(
        label=replace(candidate, bbox2d=bbox),
        x_offset=float(x_offset),
        road_ratio=ratio,
        max_existing_iou=overlap,
    )


def search_placement(
    patch: ObjectPatch,
    tgt_rig: CameraRig,
    road_mask: MaskRaster,
    existing: Sequence[BBox2D],
    cfg: RapaConfig,
    rng_seed: int,
) -> Tuple[Optional[Placement], int]:
    """find the first valid placement of patch in the target scene

    offsets are drawn from the m-point grid in a seeded shuffled order; once
    the grid is exhausted it is reshuffled, until n_max trials are used.

    Returns:
        (placement or None, number of trials used)
    """
    if road_mask.width == 0 or road_mask.height == 0:
        return None, 0
    if (road_mask.width, road_mask.height) != tgt_rig.image_size:
        raise ValidationError(
            f"road mask is {road_mask.width}x{road_mask.height}, target image is "
            f"{tgt_rig.width}x{tgt_rig.height}"
        )

    src = patch.source_label
    center = transform_center(src.location, patch.source_rig.extrinsic, tgt_rig.extrinsic)
    alpha = source_alpha(src)
    offsets = cfg.offsets()
    rng = make_rng(rng_seed, "offsets")

    trials = 0
    while trials < cfg.n_max:
        for index in rng.permutation(len(offsets)):
            trials += 1
            placement = _try_offset(src, center, alpha, offsets[index], tgt_rig, road_mask, existing, cfg)
            if placement is not None:
                return placement, trials
            if trials >= cfg.n_max:
                break
    return None, trials


def find_placement(
    patch: ObjectPatch,
    tgt_rig: CameraRig,
    road_mask: MaskRaster,
    existing: Sequence[BBox2D],
    cfg: RapaConfig,
    rng_seed: int,
) -> Optional[Placement]:
    return search_placement(patch, tgt_rig, road_mask, existing, cfg, rng_seed)[0]


def validate_placement(
    placement: Placement,
    patch: ObjectPatch,
    tgt_rig: CameraRig,
    road_mask: MaskRaster,
    existing: Sequence[BBox2D],
    cfg: RapaConfig,
) -> List[str]:
    """names of the placement constraints the placement violates (empty when valid)"""
    violations = []
    label = placement.label
    source = patch.source_label

    if not cfg.depth_min <= label.location.z < cfg.depth_max:
        violations.append("depth")
    if label.dims != source.dims:
        violations.append("dims")

    theta = viewing_angle(label.location.x, label.location.z)
    drift = wrap_angle(alpha_from_rotation(label.rotation_y, theta) - source_alpha(source))
    if abs(drift) > ALPHA_TOL:
        violations.append("alpha")

    try:
        bbox = project_box(box3d_corners(label), tgt_rig)
    except BehindCameraError:
        violations.append("behind_camera")
        return violations
    if not np.allclose(bbox.as_tuple(), label.bbox2d.as_tuple(), rtol=0.0, atol=1e-6):
        violations.append("bbox")

    col0, row0, col1, row1 = _pixel_rect(bbox, road_mask.width, road_mask.height)
    window = road_mask.data[row0:row1, col0:col1]
    ratio = float(np.mean(window == 255)) if window.size else 0.0
    if ratio < cfg.tau_road or not math.isclose(ratio, placement.road_ratio, abs_tol=1e-12):
        violations.append("road")

    overlap = max((iou2d(bbox, other) for other in existing), default=0.0)
    if overlap >= cfg.tau_overlap:
        violations.append("overlap")
    return violations


# ═══════════════════════════════════════════════════════════════════════════
# compositing
# ═══════════════════════════════════════════════════════════════════════════


def composite_patch(target_image: np.ndarray, patch: ObjectPatch, placement: Placement) -> np.ndarray:
    """paste patch, bilinearly resized to the placement bbox, with alpha-over

    Returns:
        new RGBA image of the same size; the input is not modified
    """
    out = np.array(target_image, dtype=np.uint8, copy=True)
    height, width = out.shape[:2]
    col0, row0, col1, row1 = _pixel_rect(placement.label.bbox2d, width, height)
    if col1 <= col0 or row1 <= row0:
        Logger.instance().warning(
            f"{patch.source_image_id}: zero-size destination {placement.label.bbox2d.as_tuple()}, nothing pasted"
        )
        return out

    resized = resize(
        patch.raster.astype(np.float64),
        (row1 - row0, col1 - col0),
        order=1,
        mode="edge",
        preserve_range=True,
        anti_aliasing=False,
    )
    region = out[row0:row1, col0:col1].astype(np.float64)
    a = resized[..., 3:4] / 255.0

    blended = np.empty_like(region)
    blended[..., :3] = a * resized[..., :3] + (1.0 - a) * region[..., :3]
    blended[..., 3] = resized[..., 3] + region[..., 3] * (1.0 - a[..., 0])
    out[row0:row1, col0:col1] = np.clip(np.rint(blended), 0, 255).astype(np.uint8)
    return out


def augment_scene(
    image: np.ndarray,
    labels: Sequence[Label3D],
    rig: CameraRig,
    road_mask: MaskRaster,
    patch_library: Sequence[ObjectPatch],
    cfg: RapaConfig,
    epoch_seed: int,
    image_id: str,
) -> AugmentResult:
    """paste up to cfg.patches_per_image library patches into one scene

    patches from the scene itself are excluded; the chosen ones are placed
    far to near so nearer objects are painted last, and each accepted box
    joins the overlap check of the following ones.

    Args:
        image: HxWx4 RGBA scene
        labels: annotated labels of the scene
        rig: target camera
        road_mask: drivable area of the scene
        patch_library: shared read-only patches
        cfg: placement parameters
        epoch_seed: per-scene seed for this epoch
        image_id: id of the target scene

    Returns:
        AugmentResult with the composited image and original + placed labels
    """
    result = AugmentResult(image=np.array(image, dtype=np.uint8, copy=True), labels=list(labels))
    candidates = [p for p in patch_library if p.source_image_id != image_id]
    if not candidates or cfg.patches_per_image == 0:
        return result

    rng = make_rng(epoch_seed, "choose")
    count = min(cfg.patches_per_image, len(candidates))
    chosen = [candidates[i] for i in rng.choice(len(candidates), size=count, replace=False)]

    # offsets move x only, so the target depth is known before the search
    depths = [transform_center(p.source_label.location, p.source_rig.extrinsic, rig.extrinsic).z for p in chosen]
    order = sorted(range(count), key=lambda i: -depths[i])

    existing = [label.bbox2d for label in result.labels]
    for rank, index in enumerate(order):
        patch = chosen[index]
        placement, trials = search_placement(patch, rig, road_mask, existing, cfg, derive_seed(epoch_seed, rank))
        result.attempted += 1
        result.trials += trials
        if placement is None:
            Logger.instance().debug(f"{image_id}: no placement for a patch from {patch.source_image_id}")
            continue
        result.image = composite_patch(result.image, patch, placement)
        result.labels.append(placement.label)
        result.placements.append(placement)
        result.patches.append(patch)
        existing.append(placement.label.bbox2d)
    return result

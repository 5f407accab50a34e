"""synthetic scenes and a simulated detector with known ground truth

this module contains:
- SceneSpec / generate_scene: flat-road scenes, lane road mask, sparse subsample
- render_scene_image / object_mask: flat-shaded canvas and elliptical car masks
- DetectorNoise / simulate_predictions: detector outputs plus an oracle map
- mask perturbations: dilation, erosion, polygonal boundary approximation
- run_experiment: augmentation, selection, bank refinement and GT Bank growth per epoch

world frame: cars stand on the plane y = camera_height; each scene camera
is shifted laterally from the world origin by its extrinsic.
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from skimage.draw import ellipse, polygon
from skimage.measure import approximate_polygon, find_contours
from skimage.morphology import dilation, disk, erosion

from rekah_sparse3d.evalkit.evalkit_utils import iou_bev, selection_metrics
from rekah_sparse3d.geometry.geometry_utils import (
    BBox2D,
    CameraRig,
    Label3D,
    RigidTransform,
    Vec3,
    alpha_from_rotation,
    projected_truncation,
    viewing_angle,
    with_projected_bbox,
)
from rekah_sparse3d.kitti_io.kitti_io_utils import GtBank, MaskRaster, gt_bank_size, seed_gt_bank
from rekah_sparse3d.pbf.pbf_utils import (
    BankConfig,
    PbfConfig,
    Prediction,
    PrototypeBank,
    ScoredPrediction,
    confidence_baseline,
    gt_bank_insert,
    initialize_prototypes,
    refine_prototypes,
    select_pseudo_labels,
)
from rekah_sparse3d.rapa.rapa_utils import (
    ObjectPatch,
    RapaConfig,
    augment_scene,
    build_patch_library,
    validate_placement,
)
from rekah_sparse3d.utils.async_utils import map_in_threads, run_sync
from rekah_sparse3d.utils.errors_utils import BehindCameraError, SceneGenerationError, ValidationError
from rekah_sparse3d.utils.logging_utils import Logger, logging_func
from rekah_sparse3d.utils.rng_utils import make_rng, scene_seed

MAX_PLACEMENT_ATTEMPTS = 1000
ROAD_FAR_Z = 80.0
ROAD_NEAR_Z = 0.5
MASK_NOISE_MODES = ("none", "dilate", "erode", "approx")

SKY_RGBA = (135, 170, 205, 255)
GROUND_RGBA = (70, 95, 60, 255)
ROAD_RGBA = (90, 90, 95, 255)
CAR_RGBA = (200, 35, 40, 255)


def kitti_like_rig(image_size: Tuple[int, int] = (1242, 375), lateral_offset: float = 0.0) -> CameraRig:
    """left color camera with KITTI-like intrinsics"""
    P = np.array([
        [721.5, 0.0, 609.6, 0.0],
        [0.0, 721.5, 172.9, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ])
    return CameraRig(P=P, extrinsic=RigidTransform(np.eye(3), np.array([lateral_offset, 0.0, 0.0])), image_size=image_size)


# ═══════════════════════════════════════════════════════════════════════════
# scenes
# ═══════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class SceneSpec:
    # scenes are drawn from make_rng(seed, "scene", image_id)
    seed: int = 0
    lane_half_width: float = 6.0
    car_count: Tuple[int, int] = (4, 10)
    z_min: float = 6.0
    z_max: float = 60.0
    image_size: Tuple[int, int] = (1242, 375)
    camera_height: float = 1.65
    # camera x position in the world is drawn from [-jitter, jitter]
    lateral_jitter: float = 1.0
    sparsity: float = 0.3

    def __post_init__(self):
        if self.z_min < 2.0 or self.z_max > 65.0 or not self.z_min < self.z_max:
            raise ValidationError(f"depth range must satisfy 2 <= z_min < z_max <= 65, got [{self.z_min}, {self.z_max}]")
        if not 0.0 < self.sparsity <= 1.0:
            raise ValidationError(f"sparsity must be in (0, 1], got {self.sparsity}")
        low, high = self.car_count
        if low < 0 or high < low:
            raise ValidationError(f"car count range must satisfy 0 <= min <= max, got {self.car_count}")
        if not self.lane_half_width > 0.0:
            raise ValidationError(f"lane half-width must be > 0, got {self.lane_half_width}")
        if self.lateral_jitter < 0.0:
            raise ValidationError(f"lateral jitter must be >= 0, got {self.lateral_jitter}")


@dataclass(eq=False)
class SyntheticScene:
    image_id: str
    full_gt: List[Label3D]
    sparse_gt: List[Label3D]
    rig: CameraRig
    road_mask: MaskRaster


def lane_mask(rig: CameraRig, lane_half_width: float, camera_height: float) -> MaskRaster:
    """projection of the world lane |x| <= half width onto the image"""
    world = np.array([
        [-lane_half_width, camera_height, ROAD_NEAR_Z],
        [lane_half_width, camera_height, ROAD_NEAR_Z],
        [lane_half_width, camera_height, ROAD_FAR_Z],
        [-lane_half_width, camera_height, ROAD_FAR_Z],
    ])
    camera = world @ rig.extrinsic.R.T + rig.extrinsic.T
    pixels = rig.project_points(camera)
    data = np.zeros((rig.height, rig.width), dtype=np.uint8)
    rr, cc = polygon(pixels[:, 1], pixels[:, 0], shape=data.shape)
    data[rr, cc] = 255
    return MaskRaster(rig.width, rig.height, data)


def _sample_car(spec: SceneSpec, rig: CameraRig, rng: np.random.Generator) -> Optional[Label3D]:
    dims = (rng.uniform(1.4, 1.7), rng.uniform(1.5, 1.9), rng.uniform(3.5, 4.8))
    margin = dims[1] / 2.0
    x_world = rng.uniform(-spec.lane_half_width + margin, spec.lane_half_width - margin)
    z = rng.uniform(spec.z_min, spec.z_max)
    location = Vec3(x_world + rig.extrinsic.T[0], spec.camera_height, z)
    rotation_y = rng.uniform(-math.pi, math.pi)
    label = Label3D(
        class_name="Car",
        truncation=0.0,
        occlusion=0,
        alpha=alpha_from_rotation(rotation_y, viewing_angle(location.x, location.z)),
        bbox2d=BBox2D(0.0, 0.0, 0.0, 0.0),
        dims=dims,
        location=location,
        rotation_y=rotation_y,
    )
    try:
        label = with_projected_bbox(label, rig)
        truncation = projected_truncation(label, rig)
    except BehindCameraError:
        return None
    if label.bbox2d.area <= 0.0:
        return None
    return replace(label, truncation=round(truncation, 2))


def generate_scene(spec: SceneSpec, rng: np.random.Generator, image_id: str = "000000") -> SyntheticScene:
    """cars on a flat lane with disjoint footprints, plus a sparse subsample

    Raises:
        SceneGenerationError: fewer than the minimum car count fit in MAX_PLACEMENT_ATTEMPTS draws
    """
    rig = kitti_like_rig(spec.image_size, rng.uniform(-spec.lateral_jitter, spec.lateral_jitter))
    low, high = spec.car_count
    target = int(rng.integers(low, high + 1))

    cars: List[Label3D] = []
    attempts = 0
    while len(cars) < target and attempts < MAX_PLACEMENT_ATTEMPTS:
        attempts += 1
        car = _sample_car(spec, rig, rng)
        if car is None or any(iou_bev(car, other) > 0.0 for other in cars):
            continue
        cars.append(car)
    if len(cars) < low:
        raise SceneGenerationError(f"{image_id}: placed {len(cars)} of at least {low} cars in {attempts} attempts")

    k = max(1, math.floor(spec.sparsity * len(cars) + 0.5)) if cars else 0
    keep = np.sort(rng.choice(len(cars), size=k, replace=False)) if k else []
    return SyntheticScene(
        image_id=image_id,
        full_gt=cars,
        sparse_gt=[cars[i] for i in keep],
        rig=rig,
        road_mask=lane_mask(rig, spec.lane_half_width, spec.camera_height),
    )


def object_mask(label: Label3D, rig: CameraRig) -> MaskRaster:
    """full-image elliptical foreground inscribed in the label's 2D box"""
    data = np.zeros((rig.height, rig.width), dtype=np.uint8)
    box = label.bbox2d
    radius_r = max(box.height / 2.0, 0.5)
    radius_c = max(box.width / 2.0, 0.5)
    rr, cc = ellipse((box.top + box.bottom) / 2.0, (box.left + box.right) / 2.0, radius_r, radius_c, shape=data.shape)
    data[rr, cc] = 255
    return MaskRaster(rig.width, rig.height, data)


def render_scene_image(scene: SyntheticScene) -> np.ndarray:
    """flat-shaded RGBA canvas: sky, ground, road, then cars far to near"""
    rig = scene.rig
    image = np.empty((rig.height, rig.width, 4), dtype=np.uint8)
    horizon = int(np.clip(round(rig.P[1, 2]), 0, rig.height))
    image[:horizon] = SKY_RGBA
    image[horizon:] = GROUND_RGBA
    image[scene.road_mask.foreground] = ROAD_RGBA
    for label in sorted(scene.full_gt, key=lambda l: -l.location.z):
        image[object_mask(label, rig).foreground] = CAR_RGBA
    return image


# ═══════════════════════════════════════════════════════════════════════════
# mask perturbations
# ═══════════════════════════════════════════════════════════════════════════


def dilate_mask(mask: MaskRaster, radius: int = 5) -> MaskRaster:
    return MaskRaster.from_array(dilation(mask.data, disk(radius)))


def erode_mask(mask: MaskRaster, radius: int = 5) -> MaskRaster:
    return MaskRaster.from_array(erosion(mask.data, disk(radius)))


def approximate_mask_boundary(mask: MaskRaster, tolerance: float = 2.0) -> MaskRaster:
    """replace every boundary with a simplified polygon; holes are kept"""
    padded = np.pad(mask.foreground, 1).astype(np.float64)
    filled = np.zeros(padded.shape, dtype=bool)
    for contour in find_contours(padded, 0.5):
        simplified = approximate_polygon(contour, tolerance)
        rr, cc = polygon(simplified[:, 0], simplified[:, 1], shape=padded.shape)
        region = np.zeros(padded.shape, dtype=bool)
        region[rr, cc] = True
        filled ^= region
    return MaskRaster.from_array(filled[1:-1, 1:-1])


def apply_mask_noise(mask: MaskRaster, mode: str) -> MaskRaster:
    if mode == "none":
        return mask
    if mode == "dilate":
        return dilate_mask(mask)
    if mode == "erode":
        return erode_mask(mask)
    if mode == "approx":
        return approximate_mask_boundary(mask)
    raise ValidationError(f"unknown mask noise {mode!r}; expected one of {', '.join(MASK_NOISE_MODES)}")


# ═══════════════════════════════════════════════════════════════════════════
# simulated detector
# ═══════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class DetectorNoise:
    feature_dim: int = 256
    # None: normalized all-ones direction
    direction: Optional[Tuple[float, ...]] = None
    kappa: float = 0.3
    fp_rate: float = 0.3
    depth_error_scale: float = 1.0
    sigma_a: float = 1.0
    sigma_b: float = -0.5
    sigma_noise: float = 0.1
    confidence_mean: float = 0.7
    confidence_std: float = 0.15

    def __post_init__(self):
        if self.feature_dim < 1:
            raise ValidationError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if not 0.0 <= self.fp_rate <= 1.0:
            raise ValidationError(f"fp_rate must be in [0, 1], got {self.fp_rate}")
        for name in ("kappa", "depth_error_scale", "sigma_noise", "confidence_std"):
            if getattr(self, name) < 0.0:
                raise ValidationError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.direction is not None:
            if len(self.direction) != self.feature_dim:
                raise ValidationError(f"direction has {len(self.direction)} entries, feature_dim is {self.feature_dim}")
            if not np.any(self.direction):
                raise ValidationError("direction must be nonzero")

    def unit_direction(self) -> np.ndarray:
        d = np.ones(self.feature_dim) if self.direction is None else np.asarray(self.direction, dtype=np.float64)
        return d / np.linalg.norm(d)

    @classmethod
    def noiseless(cls, **overrides) -> "DetectorNoise":
        values = dict(kappa=0.0, fp_rate=0.0, depth_error_scale=0.0, sigma_noise=0.0, confidence_std=0.0)
        values.update(overrides)
        return cls(**values)


def _normal(rng: np.random.Generator, scale: float, size=None):
    # zero scale draws nothing so noiseless runs are exact
    if scale == 0.0:
        return 0.0 if size is None else np.zeros(size)
    return rng.normal(0.0, scale, size)


def true_object_feature(noise: DetectorNoise, rng: np.random.Generator) -> np.ndarray:
    """class direction plus isotropic noise of expected norm kappa"""
    return noise.unit_direction() + _normal(rng, noise.kappa / math.sqrt(noise.feature_dim), noise.feature_dim)


def _confidence(noise: DetectorNoise, rng: np.random.Generator) -> float:
    return float(np.clip(noise.confidence_mean + _normal(rng, noise.confidence_std), 0.0, 1.0))


def _sigma_raw(noise: DetectorNoise, depth_error: float, rng: np.random.Generator) -> float:
    return float(noise.sigma_a * abs(depth_error) + noise.sigma_b + _normal(rng, noise.sigma_noise))


def _false_positive_label(reference: Label3D, rig: CameraRig, rng: np.random.Generator) -> Optional[Label3D]:
    dims = (rng.uniform(1.4, 1.7), rng.uniform(1.5, 1.9), rng.uniform(3.5, 4.8))
    location = Vec3(rng.uniform(-15.0, 15.0), reference.location.y, rng.uniform(6.0, 60.0))
    rotation_y = rng.uniform(-math.pi, math.pi)
    label = replace(
        reference,
        dims=dims,
        location=location,
        rotation_y=rotation_y,
        alpha=alpha_from_rotation(rotation_y, viewing_angle(location.x, location.z)),
    )
    try:
        label = with_projected_bbox(label, rig)
    except BehindCameraError:
        return None
    return label if label.bbox2d.area > 0.0 else None


def simulate_predictions(
    full_gt: Sequence[Label3D],
    noise: DetectorNoise,
    rng: np.random.Generator,
    rig: Optional[CameraRig] = None,
    image_id: str = "000000",
) -> Tuple[List[Prediction], Dict[str, bool]]:
    """one prediction per ground truth plus binomial false positives

    Args:
        full_gt: every real object of the scene
        noise: detector model
        rng: scene generator
        rig: camera used to place false-positive boxes (KITTI-like default)
        image_id: prefix of the prediction ids

    Returns:
        predictions (real objects first) and id -> is-real-object oracle
    """
    rig = rig or kitti_like_rig()
    preds: List[Prediction] = []
    oracle: Dict[str, bool] = {}

    def add(label: Label3D, depth_error: float, feature: np.ndarray, real: bool):
        pred_id = f"{image_id}:{len(preds)}"
        moved = replace(
            label,
            location=Vec3(label.location.x, label.location.y, label.location.z + depth_error),
            score=_confidence(noise, rng),
        )
        preds.append(Prediction(
            label=moved,
            feature=feature,
            sigma=_sigma_raw(noise, depth_error, rng),
            image_id=image_id,
            prediction_id=pred_id,
        ))
        oracle[pred_id] = real

    for gt in full_gt:
        add(gt, float(_normal(rng, noise.depth_error_scale)), true_object_feature(noise, rng), True)

    n_fp = int(rng.binomial(len(full_gt), noise.fp_rate)) if full_gt and noise.fp_rate > 0.0 else 0
    for i in range(n_fp):
        label = _false_positive_label(full_gt[i % len(full_gt)], rig, rng)
        if label is None:
            continue
        feature = rng.normal(0.0, 1.0, noise.feature_dim)
        add(label, float(_normal(rng, noise.depth_error_scale)), feature, False)
    return preds, oracle


# ═══════════════════════════════════════════════════════════════════════════
# experiment
# ═══════════════════════════════════════════════════════════════════════════

REPORT_COLUMNS = (
    "epoch",
    "bank_size",
    "pbf_precision",
    "pbf_recall",
    "conf_precision",
    "conf_recall",
    "rapa_accept_rate",
)


@dataclass
class EpochRow:
    epoch: int
    bank_size: int
    pbf_precision: Optional[float] = None
    pbf_recall: Optional[float] = None
    conf_precision: Optional[float] = None
    conf_recall: Optional[float] = None
    rapa_accept_rate: Optional[float] = None
    placement_violations: int = 0


@dataclass
class ExperimentReport:
    seed: int
    config: dict
    rows: List[EpochRow] = field(default_factory=list)

    @property
    def bank_sizes(self) -> List[int]:
        return [row.bank_size for row in self.rows]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in self.rows:
            values = [row.epoch, row.bank_size]
            for name in REPORT_COLUMNS[2:]:
                value = getattr(row, name)
                values.append("" if value is None else f"{value:.6f}")
            writer.writerow(values)
        return buffer.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"seed": self.seed, "config": self.config, "rows": [asdict(row) for row in self.rows]},
            sort_keys=True,
            indent=2,
        ) + "\n"


@dataclass(eq=False)
class _SceneEpoch:
    selected: List[ScoredPrediction]
    rejected: List[ScoredPrediction]
    baseline: List[Prediction]
    oracle: Dict[str, bool]
    attempted: int
    accepted: int
    violations: int


def _scene_features(scene: SyntheticScene, noise: DetectorNoise, seed: int) -> List[np.ndarray]:
    rng = make_rng(seed, "gt-features", scene.image_id)
    return [true_object_feature(noise, rng) for _ in scene.sparse_gt]


def scene_patch_library(
    scene: SyntheticScene, rapa_cfg: RapaConfig = None, mask_noise: str = "none"
) -> List[ObjectPatch]:
    """patches of the scene's sparse labels, alpha from (optionally perturbed) object masks"""
    image = render_scene_image(scene)
    masks = {
        i: apply_mask_noise(object_mask(label, scene.rig), mask_noise) for i, label in enumerate(scene.sparse_gt)
    }
    return build_patch_library(image, scene.sparse_gt, scene.rig, scene.image_id, masks, rapa_cfg)


def _run_scene_epoch(
    scene: SyntheticScene,
    known: List[Label3D],
    library: Sequence[ObjectPatch],
    bank: PrototypeBank,
    noise: DetectorNoise,
    rapa_cfg: RapaConfig,
    pbf_cfg: PbfConfig,
    seed: int,
    epoch: int,
    mask_noise: str,
) -> _SceneEpoch:
    mask = apply_mask_noise(scene.road_mask, mask_noise)
    augmented = augment_scene(
        render_scene_image(scene), known, scene.rig, mask, library, rapa_cfg,
        scene_seed(seed, scene.image_id, epoch), scene.image_id,
    )
    violations = 0
    existing = [label.bbox2d for label in known]
    for placement, patch in zip(augmented.placements, augmented.patches):
        if validate_placement(placement, patch, scene.rig, mask, existing, rapa_cfg):
            violations += 1
        existing.append(placement.label.bbox2d)

    preds, oracle = simulate_predictions(
        scene.full_gt, noise, make_rng(seed, "detector", scene.image_id, epoch), scene.rig, scene.image_id,
    )
    selection = select_pseudo_labels(preds, bank, pbf_cfg)
    return _SceneEpoch(
        selected=selection.selected,
        rejected=selection.rejected,
        baseline=confidence_baseline(preds, len(selection.selected)),
        oracle=oracle,
        attempted=augmented.attempted,
        accepted=augmented.accepted,
        violations=violations,
    )


def _config_echo(spec, noise, rapa_cfg, pbf_cfg, bank_cfg, epochs, scenes, mask_noise) -> dict:
    return {
        "scene": asdict(spec),
        "noise": asdict(noise),
        "rapa": asdict(rapa_cfg),
        "pbf": asdict(pbf_cfg),
        "bank": asdict(bank_cfg),
        "epochs": epochs,
        "scenes": scenes,
        "mask_noise": mask_noise,
    }


async def run_experiment_async(
    spec: SceneSpec = None,
    noise: DetectorNoise = None,
    rapa_cfg: RapaConfig = None,
    pbf_cfg: PbfConfig = None,
    epochs: int = 10,
    seed: int = 0,
    scenes: int = 100,
    jobs: int = 1,
    bank_cfg: BankConfig = None,
    mask_noise: str = "none",
) -> ExperimentReport:
    """desk-scale self-training loop over synthetic scenes

    per epoch, scenes run in parallel (augment, simulate, select); then the
    prototype bank and GT Bank are updated serially in scene order.

    Args:
        spec: scene generator parameters (defaults to SceneSpec(seed=seed))
        noise: simulated detector
        rapa_cfg: placement parameters
        pbf_cfg: selection thresholds
        epochs: number of self-training epochs (0 reports the seeded state)
        seed: global seed
        scenes: number of synthetic scenes
        jobs: scene-level parallelism
        bank_cfg: prototype bank parameters
        mask_noise: boundary perturbation of the road mask and of the object masks

    Returns:
        ExperimentReport with one row per epoch, starting at epoch 0
    """
    spec = spec or SceneSpec(seed=seed)
    noise = noise or DetectorNoise()
    rapa_cfg = rapa_cfg or RapaConfig()
    pbf_cfg = pbf_cfg or PbfConfig()
    bank_cfg = bank_cfg or BankConfig()
    if epochs < 0 or scenes < 0:
        raise ValidationError(f"epochs and scenes must be >= 0, got {epochs} and {scenes}")
    if mask_noise not in MASK_NOISE_MODES:
        raise ValidationError(f"unknown mask noise {mask_noise!r}")
    logger = Logger.instance()

    image_ids = [f"{i:06d}" for i in range(scenes)]
    dataset = await map_in_threads(
        lambda image_id: generate_scene(spec, make_rng(spec.seed, "scene", image_id), image_id), image_ids, jobs,
    )
    libraries = await map_in_threads(lambda scene: scene_patch_library(scene, rapa_cfg, mask_noise), dataset, jobs)
    library = [patch for patches in libraries for patch in patches]
    features = await map_in_threads(lambda scene: _scene_features(scene, noise, seed), dataset, jobs)

    bank = initialize_prototypes((f for scene_features in features for f in scene_features), bank_cfg)
    gt_bank: GtBank = seed_gt_bank({scene.image_id: scene.sparse_gt for scene in dataset})
    report = ExperimentReport(
        seed=seed,
        config=_config_echo(spec, noise, rapa_cfg, pbf_cfg, bank_cfg, epochs, scenes, mask_noise),
        rows=[EpochRow(epoch=0, bank_size=gt_bank_size(gt_bank))],
    )
    logger.info(f"seeded {len(dataset)} scenes: {len(library)} patches, {len(bank)} prototypes, "
                f"{gt_bank_size(gt_bank)} sparse labels")
    if epochs and not bank.slots:
        raise ValidationError("no sparse ground truth to initialize the prototype bank")

    for epoch in range(1, epochs + 1):
        known = {scene.image_id: list(gt_bank[scene.image_id].labels) for scene in dataset}
        results = await map_in_threads(
            lambda scene: _run_scene_epoch(
                scene, known[scene.image_id], library, bank, noise, rapa_cfg, pbf_cfg, seed, epoch, mask_noise,
            ),
            dataset,
            jobs,
        )

        for scene, result in zip(dataset, results):
            refine_prototypes(bank, [item.feature for item in result.selected])
            gt_bank_insert(gt_bank, scene.image_id, result.selected, epoch)

        oracle = {k: v for result in results for k, v in result.oracle.items()}
        selected = [item for result in results for item in result.selected]
        rejected = [item for result in results for item in result.rejected]
        pbf = selection_metrics(selected, rejected, oracle)
        baseline_ids = {pred.prediction_id for result in results for pred in result.baseline}
        conf = selection_metrics(sorted(baseline_ids), sorted(set(oracle) - baseline_ids), oracle)
        attempted = sum(result.attempted for result in results)
        accepted = sum(result.accepted for result in results)
        row = EpochRow(
            epoch=epoch,
            bank_size=gt_bank_size(gt_bank),
            pbf_precision=pbf.precision,
            pbf_recall=pbf.recall,
            conf_precision=conf.precision,
            conf_recall=conf.recall,
            rapa_accept_rate=accepted / attempted if attempted else 0.0,
            placement_violations=sum(result.violations for result in results),
        )
        report.rows.append(row)
        logger.info(f"epoch {epoch}: bank {row.bank_size}, pbf precision {row.pbf_precision:.3f}, "
                    f"confidence precision {row.conf_precision:.3f}, accept rate {row.rapa_accept_rate:.3f}")
    return report


@logging_func("synthetic self-training experiment")
def run_experiment(*args, **kwargs) -> ExperimentReport:
    """synchronous wrapper of run_experiment_async"""
    return run_sync(run_experiment_async(*args, **kwargs))

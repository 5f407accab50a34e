"""batch commands of the rekah-sparse3d CLI

commands (7 total):
- rapa: extract-patches, augment
- pbf: proto-init, filter
- evaluation: eval
- simulation: simulate, report

every value resolves as: command-line flag > --config file > built-in default.
all outputs go under --out.
"""

import configparser
import csv
from dataclasses import replace
from pathlib import Path
from typing import Annotated, Callable, Dict, List, Optional

import typer

from rekah_sparse3d.evalkit.evalkit_utils import evaluate_dataset, write_eval_csv
from rekah_sparse3d.kitti_io.kitti_io_utils import (
    CalibFile,
    LabelFile,
    gt_bank_growth,
    load_gt_bank,
    read_calib_file,
    read_image_file,
    read_label_file,
    read_mask_file,
    save_gt_bank,
    seed_gt_bank,
    write_image_file,
    write_label_file,
)
from rekah_sparse3d.pbf.pbf_utils import (
    BankConfig,
    PbfConfig,
    gt_bank_insert,
    initialize_prototypes,
    load_prototype_bank,
    read_features_jsonl,
    read_predictions_jsonl,
    refine_prototypes,
    save_prototype_bank,
    select_pseudo_labels,
    write_scored_jsonl,
)
from rekah_sparse3d.rapa.rapa_utils import (
    RapaConfig,
    augment_scene,
    build_patch_library,
    read_patch_file,
    write_patch_file,
)
from rekah_sparse3d.simharness.simharness_utils import MASK_NOISE_MODES, run_experiment
from rekah_sparse3d.utils.async_utils import map_in_threads, run_sync
from rekah_sparse3d.utils.config_utils import TOOL_SECTION, get_config_value, read_key_value_config
from rekah_sparse3d.utils.errors_utils import ToolIOError, ValidationError
from rekah_sparse3d.utils.logging_utils import Logger, logging_func
from rekah_sparse3d.utils.rng_utils import scene_seed

# ═══════════════════════════════════════════════════════════════════════════
# shared options
# ═══════════════════════════════════════════════════════════════════════════

PathOpt = Optional[Path]

LabelsOpt = Annotated[PathOpt, typer.Option("--labels", help="directory of <image_id>.txt label files")]
CalibOpt = Annotated[PathOpt, typer.Option("--calib", help="directory of <image_id>.txt calibration files")]
ImagesOpt = Annotated[PathOpt, typer.Option("--images", help="directory of <image_id>.img RGBA containers")]
MasksOpt = Annotated[PathOpt, typer.Option("--masks", help="directory of .pgm masks")]
PatchesOpt = Annotated[PathOpt, typer.Option("--patches", help="directory of .patch containers")]
PredictionsOpt = Annotated[PathOpt, typer.Option("--predictions", help="predictions JSONL (filter) or label directory (eval)")]
GtBankOpt = Annotated[PathOpt, typer.Option("--gt-bank", help="GT Bank JSONL")]
OutOpt = Annotated[PathOpt, typer.Option("--out", help="output directory")]
ConfigOpt = Annotated[PathOpt, typer.Option("--config", help="key=value config file")]
SeedOpt = Annotated[Optional[int], typer.Option("--seed", help="global seed (default 0)")]
JobsOpt = Annotated[Optional[int], typer.Option("--jobs", help="scene-level parallelism (default 1)")]
EpochOpt = Annotated[Optional[int], typer.Option("--epoch", help="current epoch")]

TauRoadOpt = Annotated[Optional[float], typer.Option("--tau-road", help="minimum road ratio (default 0.7)")]
TauOverlapOpt = Annotated[Optional[float], typer.Option("--tau-overlap", help="maximum 2D IoU with existing boxes (default 0.1)")]
DeltaOpt = Annotated[Optional[float], typer.Option("--delta", help="horizontal search range in meters (default 5.0)")]
MOpt = Annotated[Optional[int], typer.Option("--m", help="number of candidate offsets (default 10)")]
NMaxOpt = Annotated[Optional[int], typer.Option("--n-max", help="placement trials per patch (default 40)")]
PatchesPerImageOpt = Annotated[Optional[int], typer.Option("--patches-per-image", help="patches pasted per scene (default 2)")]

TauDepthOpt = Annotated[Optional[float], typer.Option("--tau-depth", help="depth reliability threshold (default 1.0)")]
TauProtoOpt = Annotated[Optional[float], typer.Option("--tau-proto", help="prototype similarity threshold (default 0.85)")]
SelectionModeOpt = Annotated[Optional[str], typer.Option("--selection-mode", help="pseudo-label gates: both, depth or proto (default both)")]
KOpt = Annotated[Optional[int], typer.Option("--k", help="prototype bank capacity (default 256)")]
BetaOpt = Annotated[Optional[float], typer.Option("--beta", help="refinement momentum (default 0.005)")]
BetaInitOpt = Annotated[Optional[float], typer.Option("--beta-init", help="initialization momentum (default 0.01)")]


class Settings:
    """flag > config file > default lookup for one command run"""

    def __init__(self, config_path: Optional[Path]):
        self.parser: Optional[configparser.ConfigParser] = None
        if config_path is not None:
            _require(config_path, "config file")
            self.parser = read_key_value_config(str(config_path))

    def get(self, key: str, flag, default, cast: Callable = float):
        if flag is not None:
            return flag
        value = get_config_value(TOOL_SECTION, key, config=self.parser) if self.parser else None
        if value is None:
            return default
        try:
            return cast(value)
        except ValueError:
            raise ValidationError(f"config key {key}: cannot read {value!r}") from None

    def rapa(self, tau_road=None, tau_overlap=None, delta=None, m=None, n_max=None, patches_per_image=None) -> RapaConfig:
        d = RapaConfig()
        return RapaConfig(
            delta=self.get("delta", delta, d.delta),
            num_offsets=self.get("m", m, d.num_offsets, int),
            tau_road=self.get("tau_road", tau_road, d.tau_road),
            tau_overlap=self.get("tau_overlap", tau_overlap, d.tau_overlap),
            n_max=self.get("n_max", n_max, d.n_max, int),
            depth_min=self.get("depth_min", None, d.depth_min),
            depth_max=self.get("depth_max", None, d.depth_max),
            patches_per_image=self.get("patches_per_image", patches_per_image, d.patches_per_image, int),
        )

    def pbf(self, tau_depth=None, tau_proto=None, mode=None) -> PbfConfig:
        d = PbfConfig()
        return PbfConfig(
            tau_depth=self.get("tau_depth", tau_depth, d.tau_depth),
            tau_proto=self.get("tau_proto", tau_proto, d.tau_proto),
            mode=self.get("selection_mode", mode, d.mode, str),
        )

    def bank(self, k=None, beta=None, beta_init=None) -> BankConfig:
        d = BankConfig()
        return BankConfig(
            capacity=self.get("k", k, d.capacity, int),
            tau_new=self.get("tau_new", None, d.tau_new),
            beta_init=self.get("beta_init", beta_init, d.beta_init),
            beta_train=self.get("beta", beta, d.beta_train),
        )

    def seed(self, flag) -> int:
        return self.get("seed", flag, 0, int)

    def jobs(self, flag) -> int:
        jobs = self.get("jobs", flag, 1, int)
        if jobs < 1:
            raise ValidationError(f"--jobs must be >= 1, got {jobs}")
        return jobs


def _require(path: Optional[Path], what: str) -> Path:
    if path is None:
        raise ValidationError(f"missing required {what}")
    if not path.exists():
        raise ToolIOError(f"{what} not found: {path}")
    return path


def _out_dir(path: Optional[Path]) -> Path:
    if path is None:
        raise ValidationError("missing required --out directory")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _label_files(directory: Path) -> List[LabelFile]:
    return [read_label_file(p) for p in sorted(directory.glob("*.txt"))]


def _scene_calib(calib_dir: Path, image_id: str) -> CalibFile:
    return read_calib_file(_require(calib_dir / f"{image_id}.txt", "calibration file"))


def register_commands(app: typer.Typer):
    """register all batch commands (7 total)"""

    # ═══════════════════════════════════════════════════════════════════
    # rapa
    # ═══════════════════════════════════════════════════════════════════

    @app.command("extract-patches")
    @logging_func("build the patch library")
    def extract_patches(
        labels: LabelsOpt = None,
        calib: CalibOpt = None,
        images: ImagesOpt = None,
        masks: MasksOpt = None,
        out: OutOpt = None,
        config: ConfigOpt = None,
    ):
        """Crop fully visible cars into .patch containers.

        Object masks are optional full-image PGMs named <image_id>_<label index, two digits>.pgm
        (the same index as the .patch name);
        without one the crop is pasted opaque.
        """
        settings = Settings(config)
        cfg = settings.rapa()
        labels_dir = _require(labels, "--labels directory")
        calib_dir = _require(calib, "--calib directory")
        images_dir = _require(images, "--images directory")
        out_dir = _out_dir(out)

        total = 0
        for label_file in _label_files(labels_dir):
            image_id = label_file.image_id
            image = read_image_file(_require(images_dir / f"{image_id}.img", "image"))
            rig = _scene_calib(calib_dir, image_id).camera_rig((image.shape[1], image.shape[0]))
            object_masks = {}
            if masks is not None:
                for index in range(len(label_file.labels)):
                    mask_path = masks / f"{image_id}_{index:02d}.pgm"
                    if mask_path.exists():
                        object_masks[index] = read_mask_file(mask_path)
            patches = build_patch_library(image, label_file.labels, rig, image_id, object_masks, cfg)
            for patch in patches:
                write_patch_file(out_dir / f"{image_id}_{patch.source_index:02d}.patch", patch)
            total += len(patches)
        Logger.instance().info(f"wrote {total} patches to {out_dir}")

    @app.command("augment")
    @logging_func("augment scenes for one epoch")
    def augment(
        labels: LabelsOpt = None,
        calib: CalibOpt = None,
        images: ImagesOpt = None,
        masks: MasksOpt = None,
        patches: PatchesOpt = None,
        out: OutOpt = None,
        seed: SeedOpt = None,
        epoch: EpochOpt = None,
        jobs: JobsOpt = None,
        tau_road: TauRoadOpt = None,
        tau_overlap: TauOverlapOpt = None,
        delta: DeltaOpt = None,
        m: MOpt = None,
        n_max: NMaxOpt = None,
        patches_per_image: PatchesPerImageOpt = None,
        config: ConfigOpt = None,
    ):
        """Paste library patches onto every scene (road masks: <image_id>.pgm)."""
        settings = Settings(config)
        cfg = settings.rapa(tau_road, tau_overlap, delta, m, n_max, patches_per_image)
        global_seed = settings.seed(seed)
        epoch_value = settings.get("epoch", epoch, 0, int)
        labels_dir = _require(labels, "--labels directory")
        calib_dir = _require(calib, "--calib directory")
        images_dir = _require(images, "--images directory")
        masks_dir = _require(masks, "--masks directory")
        patches_dir = _require(patches, "--patches directory")
        out_dir = _out_dir(out)
        (out_dir / "image_2").mkdir(exist_ok=True)
        (out_dir / "label_2").mkdir(exist_ok=True)

        library = [read_patch_file(p) for p in sorted(patches_dir.glob("*.patch"))]
        label_files = _label_files(labels_dir)

        def run_scene(label_file: LabelFile):
            image_id = label_file.image_id
            image = read_image_file(_require(images_dir / f"{image_id}.img", "image"))
            rig = _scene_calib(calib_dir, image_id).camera_rig((image.shape[1], image.shape[0]))
            road = read_mask_file(_require(masks_dir / f"{image_id}.pgm", "road mask"))
            return augment_scene(
                image, label_file.labels, rig, road, library, cfg,
                scene_seed(global_seed, image_id, epoch_value), image_id,
            )

        results = run_sync(map_in_threads(run_scene, label_files, settings.jobs(jobs)))
        with open(out_dir / "augment_stats.csv", "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["image_id", "attempted", "accepted", "trials"])
            for label_file, result in zip(label_files, results):
                write_image_file(out_dir / "image_2" / f"{label_file.image_id}.img", result.image)
                write_label_file(out_dir / "label_2" / f"{label_file.image_id}.txt", result.labels)
                writer.writerow([label_file.image_id, result.attempted, result.accepted, result.trials])
        accepted = sum(r.accepted for r in results)
        attempted = sum(r.attempted for r in results)
        Logger.instance().info(f"placed {accepted} of {attempted} patches over {len(results)} scenes")

    # ═══════════════════════════════════════════════════════════════════
    # pbf
    # ═══════════════════════════════════════════════════════════════════

    @app.command("proto-init")
    @logging_func("initialize the prototype bank")
    def proto_init(
        features: Annotated[PathOpt, typer.Option("--features", help="sparse-GT feature JSONL")] = None,
        out: OutOpt = None,
        k: KOpt = None,
        beta_init: BetaInitOpt = None,
        beta: BetaOpt = None,
        config: ConfigOpt = None,
    ):
        """Build prototypes.json from ground-truth RoI features."""
        settings = Settings(config)
        bank_cfg = settings.bank(k, beta, beta_init)
        vectors = read_features_jsonl(_require(features, "--features file"))
        bank = initialize_prototypes(vectors, bank_cfg)
        out_dir = _out_dir(out)
        save_prototype_bank(bank, out_dir / "prototypes.json")
        Logger.instance().info(f"{len(bank)} prototypes from {len(vectors)} features ({bank.skipped_zero} zero skipped)")

    @app.command("filter")
    @logging_func("select pseudo-labels")
    def filter_predictions(
        predictions: PredictionsOpt = None,
        prototypes: Annotated[PathOpt, typer.Option("--prototypes", help="prototype bank JSON")] = None,
        gt_bank: GtBankOpt = None,
        labels: LabelsOpt = None,
        out: OutOpt = None,
        epoch: EpochOpt = None,
        tau_depth: TauDepthOpt = None,
        tau_proto: TauProtoOpt = None,
        selection_mode: SelectionModeOpt = None,
        beta: BetaOpt = None,
        config: ConfigOpt = None,
    ):
        """Select pseudo-labels, refine the bank and update the GT Bank.

        the GT Bank starts from --gt-bank when given, else from the sparse
        labels in --labels, else empty.
        """
        settings = Settings(config)
        cfg = settings.pbf(tau_depth, tau_proto, selection_mode)
        epoch_value = settings.get("epoch", epoch, 1, int)
        preds = read_predictions_jsonl(_require(predictions, "--predictions file"))
        bank = load_prototype_bank(_require(prototypes, "--prototypes file"))
        bank.config = replace(bank.config, beta_train=settings.get("beta", beta, bank.config.beta_train))

        if gt_bank is not None:
            bank_records = load_gt_bank(_require(gt_bank, "--gt-bank file"))
        elif labels is not None:
            bank_records = seed_gt_bank({lf.image_id: lf.labels for lf in _label_files(_require(labels, "--labels directory"))})
        else:
            bank_records = {}

        out_dir = _out_dir(out)
        # an empty run never needs the bank
        selected, rejected = select_pseudo_labels(preds, bank, cfg) if preds else ([], [])

        if selected:
            refine_prototypes(bank, [item.feature for item in selected])
        by_image: Dict[str, list] = {}
        for item in selected:
            by_image.setdefault(item.prediction.image_id, []).append(item)
        for image_id, items in by_image.items():
            gt_bank_insert(bank_records, image_id, items, epoch_value)

        write_scored_jsonl(out_dir / "selected.jsonl", selected)
        write_scored_jsonl(out_dir / "rejected.jsonl", rejected)
        save_prototype_bank(bank, out_dir / "prototypes.json")
        save_gt_bank(bank_records, out_dir / "gt_bank.jsonl")
        Logger.instance().info(f"selected {len(selected)} of {len(preds)} predictions")

    # ═══════════════════════════════════════════════════════════════════
    # evaluation
    # ═══════════════════════════════════════════════════════════════════

    @app.command("eval")
    @logging_func("evaluate AP_R40")
    def evaluate(
        predictions: PredictionsOpt = None,
        labels: LabelsOpt = None,
        out: OutOpt = None,
        iou_threshold: Annotated[Optional[float], typer.Option("--iou-threshold", help="matching IoU (default 0.7)")] = None,
        config: ConfigOpt = None,
    ):
        """AP_R40 (3D and BEV) for Easy/Moderate/Hard; missing prediction files count as empty."""
        settings = Settings(config)
        threshold = settings.get("iou_threshold", iou_threshold, 0.7)
        pred_dir = _require(predictions, "--predictions directory")
        gt_files = _label_files(_require(labels, "--labels directory"))
        images = []
        for gt_file in gt_files:
            pred_path = pred_dir / f"{gt_file.image_id}.txt"
            preds = read_label_file(pred_path).labels if pred_path.exists() else []
            images.append((preds, gt_file.labels))
        rows = evaluate_dataset(images, iou_threshold=threshold)
        out_dir = _out_dir(out)
        write_eval_csv(rows, str(out_dir / "eval.csv"))
        for row in rows:
            Logger.instance().info(f"{row.metric} {row.difficulty}: {row.value:.4f}")

    # ═══════════════════════════════════════════════════════════════════
    # simulation
    # ═══════════════════════════════════════════════════════════════════

    @app.command("simulate")
    @logging_func("run the synthetic self-training experiment")
    def simulate(
        out: OutOpt = None,
        seed: SeedOpt = None,
        jobs: JobsOpt = None,
        scenes: Annotated[Optional[int], typer.Option("--scenes", help="number of synthetic scenes (default 100)")] = None,
        epochs: Annotated[Optional[int], typer.Option("--epochs", help="self-training epochs (default 10)")] = None,
        mask_noise: Annotated[Optional[str], typer.Option("--mask-noise", help="none, dilate, erode or approx")] = None,
        tau_road: TauRoadOpt = None,
        tau_overlap: TauOverlapOpt = None,
        delta: DeltaOpt = None,
        m: MOpt = None,
        n_max: NMaxOpt = None,
        patches_per_image: PatchesPerImageOpt = None,
        tau_depth: TauDepthOpt = None,
        tau_proto: TauProtoOpt = None,
        selection_mode: SelectionModeOpt = None,
        k: KOpt = None,
        beta: BetaOpt = None,
        beta_init: BetaInitOpt = None,
        config: ConfigOpt = None,
    ):
        """Write report.csv and report.json for a seeded synthetic run."""
        settings = Settings(config)
        noise_mode = settings.get("mask_noise", mask_noise, "none", str)
        if noise_mode not in MASK_NOISE_MODES:
            raise ValidationError(f"--mask-noise must be one of {', '.join(MASK_NOISE_MODES)}, got {noise_mode!r}")
        report = run_experiment(
            rapa_cfg=settings.rapa(tau_road, tau_overlap, delta, m, n_max, patches_per_image),
            pbf_cfg=settings.pbf(tau_depth, tau_proto, selection_mode),
            bank_cfg=settings.bank(k, beta, beta_init),
            epochs=settings.get("epochs", epochs, 10, int),
            seed=settings.seed(seed),
            scenes=settings.get("scenes", scenes, 100, int),
            jobs=settings.jobs(jobs),
            mask_noise=noise_mode,
        )
        out_dir = _out_dir(out)
        (out_dir / "report.csv").write_text(report.to_csv(), encoding="utf-8", newline="")
        (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8", newline="")

    @app.command("report")
    @logging_func("GT Bank growth")
    def report(
        gt_bank: GtBankOpt = None,
        out: OutOpt = None,
        epochs: Annotated[Optional[int], typer.Option("--epochs", help="last epoch to report (default: latest entry)")] = None,
        config: ConfigOpt = None,
    ):
        """Write gt_bank_growth.csv (bank size per epoch) from a GT Bank."""
        settings = Settings(config)
        bank_records = load_gt_bank(_require(gt_bank, "--gt-bank file"))
        last_epoch = settings.get("epochs", epochs, None, int)
        rows = gt_bank_growth(bank_records, last_epoch)
        out_dir = _out_dir(out)
        with open(out_dir / "gt_bank_growth.csv", "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["epoch", "bank_size", "sparse_gt", "pseudo"])
            for row in rows:
                writer.writerow([row.epoch, row.bank_size, row.sparse_gt, row.pseudo])

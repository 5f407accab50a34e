"""commands_utils / cli tests

test classes:
- TestCliSurface: help, usage errors and exit codes
- TestRapaCommands: extract-patches and augment on synthetic scenes
- TestPbfCommands: proto-init and filter
- TestEvalAndReport: eval and report
- TestSimulate: seeded synthetic runs and config precedence
"""

import csv
import json

import numpy as np
import pytest
import typer

from rekah_sparse3d.cli import USAGE_ERROR, main
from rekah_sparse3d.geometry.geometry_utils import BBox2D, Label3D, Vec3
from rekah_sparse3d.kitti_io.kitti_io_utils import (
    CalibFile,
    EntrySource,
    MaskRaster,
    format_label_line,
    load_gt_bank,
    read_label_file,
    read_mask_file,
    save_gt_bank,
    seed_gt_bank,
    write_calib_file,
    write_image_file,
    write_label_file,
    write_mask_file,
)
from rekah_sparse3d.pbf.pbf_utils import load_prototype_bank
from rekah_sparse3d.simharness.simharness_utils import SceneSpec, generate_scene, object_mask, render_scene_image
from rekah_sparse3d.utils.logging_utils import Logger
from rekah_sparse3d.utils.rng_utils import make_rng

COMMANDS = ["extract-patches", "augment", "proto-init", "filter", "eval", "simulate", "report"]


# ═══════════════════════════════════════════════════════════════════════════
# test fixtures
# ═══════════════════════════════════════════════════════════════════════════


@pytest.fixture(autouse=True)
def fresh_logger():
    Logger.reset_instance()
    yield
    Logger.reset_instance()


def make_label(z=20.0, score=None) -> Label3D:
    return Label3D(
        class_name="Car",
        truncation=0.0,
        occlusion=0,
        alpha=0.0,
        bbox2d=BBox2D(100.0, 150.0, 160.0, 200.0),
        dims=(1.5, 1.6, 3.9),
        location=Vec3(0.0, 1.65, z),
        rotation_y=0.0,
        score=score,
    )


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.reader(f))


def write_scene_dirs(root, image_ids, with_object_masks=True):
    """render synthetic scenes into labels/calib/images/masks directories"""
    dirs = {name: root / name for name in ("labels", "calib", "images", "masks", "objects")}
    for d in dirs.values():
        d.mkdir()
    for image_id in image_ids:
        scene = generate_scene(SceneSpec(car_count=(5, 5), sparsity=1.0), make_rng(3, "scene", image_id), image_id)
        write_label_file(dirs["labels"] / f"{image_id}.txt", scene.full_gt)
        write_calib_file(dirs["calib"] / f"{image_id}.txt", CalibFile.from_rig(scene.rig))
        write_image_file(dirs["images"] / f"{image_id}.img", render_scene_image(scene))
        write_mask_file(dirs["masks"] / f"{image_id}.pgm", scene.road_mask)
        if with_object_masks:
            for index, label in enumerate(scene.full_gt):
                write_mask_file(dirs["objects"] / f"{image_id}_{index:02d}.pgm", object_mask(label, scene.rig))
    return dirs


# ═══════════════════════════════════════════════════════════════════════════
# TestCliSurface: help, usage errors and exit codes
# ═══════════════════════════════════════════════════════════════════════════


class TestCliSurface:
    """main() exit code mapping"""

    def test_help(self):
        assert main(["--help"]) == 0

    @pytest.mark.parametrize("command", COMMANDS)
    def test_command_help(self, command):
        assert main([command, "--help"]) == 0

    def test_unknown_command(self):
        assert main(["no-such-command"]) == 1

    def test_unknown_flag(self, tmp_path):
        assert main(["report", "--bogus", str(tmp_path)]) == 1

    def test_bad_option_type(self, tmp_path):
        assert main(["simulate", "--out", str(tmp_path), "--seed", "abc"]) == 1

    def test_usage_error_on_stderr(self, tmp_path, capsys):
        assert main(["report", "--bogus", str(tmp_path)]) == 1
        captured = capsys.readouterr()
        assert "--bogus" in captured.err
        assert captured.out == ""

    def test_usage_error_matches_typer(self):
        assert issubclass(typer.BadParameter, USAGE_ERROR)

    def test_missing_required_option(self, tmp_path):
        assert main(["report", "--out", str(tmp_path)]) == 1

    def test_missing_input_file(self, tmp_path):
        assert main(["report", "--gt-bank", str(tmp_path / "absent.jsonl"), "--out", str(tmp_path / "out")]) == 2

    def test_malformed_input(self, tmp_path):
        bank = tmp_path / "gt_bank.jsonl"
        bank.write_text("{not json\n", encoding="utf-8")
        assert main(["report", "--gt-bank", str(bank), "--out", str(tmp_path / "out")]) == 1

    def test_quiet(self, tmp_path):
        save_gt_bank({}, tmp_path / "gt_bank.jsonl")
        assert main(["--quiet", "report", "--gt-bank", str(tmp_path / "gt_bank.jsonl"), "--out", str(tmp_path)]) == 0
        assert Logger.instance().level == 30


# ═══════════════════════════════════════════════════════════════════════════
# TestRapaCommands: extract-patches and augment on synthetic scenes
# ═══════════════════════════════════════════════════════════════════════════


class TestRapaCommands:
    """extract-patches / augment"""

    def test_extract_patches_names(self, tmp_path):
        dirs = write_scene_dirs(tmp_path, ["000000"])
        out = tmp_path / "patches"
        code = main([
            "extract-patches", "--labels", str(dirs["labels"]), "--calib", str(dirs["calib"]),
            "--images", str(dirs["images"]), "--masks", str(dirs["objects"]), "--out", str(out),
        ])
        assert code == 0
        count = len(read_label_file(dirs["labels"] / "000000.txt").labels)
        for path in out.glob("*.patch"):
            image_id, index = path.stem.split("_")
            assert image_id == "000000"
            assert len(index) == 2
            assert 0 <= int(index) < count

    def test_extract_patches_reads_padded_mask_names(self, tmp_path):
        dirs = write_scene_dirs(tmp_path, ["000000"])
        for path in dirs["objects"].glob("*.pgm"):
            assert len(path.stem.split("_")[1]) == 2
            mask = read_mask_file(path)
            write_mask_file(path, MaskRaster.from_array(np.zeros((mask.height, mask.width), dtype=np.uint8)))
        args = [
            "extract-patches", "--labels", str(dirs["labels"]), "--calib", str(dirs["calib"]),
            "--images", str(dirs["images"]), "--out",
        ]
        assert main([*args, str(tmp_path / "opaque")]) == 0
        assert list((tmp_path / "opaque").glob("*.patch"))
        # every mask is empty, so every candidate is skipped
        assert main([*args, str(tmp_path / "masked"), "--masks", str(dirs["objects"])]) == 0
        assert list((tmp_path / "masked").glob("*.patch")) == []

    def test_extract_missing_image(self, tmp_path):
        dirs = write_scene_dirs(tmp_path, ["000000"], with_object_masks=False)
        (dirs["images"] / "000000.img").unlink()
        code = main([
            "extract-patches", "--labels", str(dirs["labels"]), "--calib", str(dirs["calib"]),
            "--images", str(dirs["images"]), "--out", str(tmp_path / "patches"),
        ])
        assert code == 2

    def _augment(self, dirs, patches, out, jobs="1"):
        return main([
            "augment", "--labels", str(dirs["labels"]), "--calib", str(dirs["calib"]),
            "--images", str(dirs["images"]), "--masks", str(dirs["masks"]), "--patches", str(patches),
            "--out", str(out), "--seed", "5", "--epoch", "2", "--jobs", jobs, "--tau-road", "0.5",
        ])

    def test_augment_outputs(self, tmp_path):
        dirs = write_scene_dirs(tmp_path, ["000000", "000001"])
        patches = tmp_path / "patches"
        assert main([
            "extract-patches", "--labels", str(dirs["labels"]), "--calib", str(dirs["calib"]),
            "--images", str(dirs["images"]), "--masks", str(dirs["objects"]), "--out", str(patches),
        ]) == 0

        out = tmp_path / "aug"
        assert self._augment(dirs, patches, out) == 0
        stats = read_csv(out / "augment_stats.csv")
        assert stats[0] == ["image_id", "attempted", "accepted", "trials"]
        assert [row[0] for row in stats[1:]] == ["000000", "000001"]
        for row in stats[1:]:
            image_id, _, accepted, _ = row
            original = read_label_file(dirs["labels"] / f"{image_id}.txt").labels
            augmented = read_label_file(out / "label_2" / f"{image_id}.txt").labels
            assert len(augmented) == len(original) + int(accepted)
            assert augmented[: len(original)] == original
            assert (out / "image_2" / f"{image_id}.img").exists()

    def test_augment_deterministic_across_jobs(self, tmp_path):
        dirs = write_scene_dirs(tmp_path, ["000000", "000001", "000002"])
        patches = tmp_path / "patches"
        main([
            "extract-patches", "--labels", str(dirs["labels"]), "--calib", str(dirs["calib"]),
            "--images", str(dirs["images"]), "--masks", str(dirs["objects"]), "--out", str(patches),
        ])
        assert self._augment(dirs, patches, tmp_path / "a", jobs="1") == 0
        assert self._augment(dirs, patches, tmp_path / "b", jobs="3") == 0
        assert (tmp_path / "a" / "augment_stats.csv").read_bytes() == (tmp_path / "b" / "augment_stats.csv").read_bytes()
        for image_id in ("000000", "000001", "000002"):
            for sub, ext in (("image_2", "img"), ("label_2", "txt")):
                a = (tmp_path / "a" / sub / f"{image_id}.{ext}").read_bytes()
                b = (tmp_path / "b" / sub / f"{image_id}.{ext}").read_bytes()
                assert a == b

    def test_augment_bad_jobs(self, tmp_path):
        dirs = write_scene_dirs(tmp_path, ["000000"], with_object_masks=False)
        patches = tmp_path / "patches"
        patches.mkdir()
        assert self._augment(dirs, patches, tmp_path / "aug", jobs="0") == 1


# ═══════════════════════════════════════════════════════════════════════════
# TestPbfCommands: proto-init and filter
# ═══════════════════════════════════════════════════════════════════════════


class TestPbfCommands:
    """proto-init / filter"""

    @pytest.fixture
    def prototypes(self, tmp_path):
        features = tmp_path / "features.jsonl"
        write_jsonl(features, [{"feature": [1.0, 0.0]}, {"feature": [0.99, 0.01]}, {"feature": [0.0, 0.0]}])
        out = tmp_path / "init"
        assert main(["proto-init", "--features", str(features), "--out", str(out), "--k", "4"]) == 0
        return out / "prototypes.json"

    def test_proto_init(self, prototypes):
        bank = load_prototype_bank(prototypes)
        assert len(bank) == 1
        assert bank.config.capacity == 4
        assert bank.skipped_zero == 1

    def test_filter_empty_predictions(self, tmp_path, prototypes):
        preds = tmp_path / "preds.jsonl"
        preds.write_text("", encoding="utf-8")
        out = tmp_path / "out"
        assert main(["filter", "--predictions", str(preds), "--prototypes", str(prototypes), "--out", str(out)]) == 0
        assert (out / "selected.jsonl").read_text(encoding="utf-8") == ""
        assert (out / "rejected.jsonl").read_text(encoding="utf-8") == ""
        assert load_gt_bank(out / "gt_bank.jsonl") == {}

    def test_filter_selects_and_updates_bank(self, tmp_path, prototypes):
        preds = tmp_path / "preds.jsonl"
        write_jsonl(preds, [
            {"image_id": "000001", "label": format_label_line(make_label(z=20.0, score=0.9)), "sigma": -0.5, "feature": [1.0, 0.0]},
            {"image_id": "000001", "label": format_label_line(make_label(z=35.0, score=0.8)), "sigma": -0.5, "feature": [0.0, 1.0]},
            {"image_id": "000002", "label": format_label_line(make_label(z=30.0, score=0.7)), "sigma": 2.0, "feature": [1.0, 0.0]},
        ])
        labels = tmp_path / "labels"
        labels.mkdir()
        write_label_file(labels / "000001.txt", [make_label(z=50.0)])

        out = tmp_path / "out"
        code = main([
            "filter", "--predictions", str(preds), "--prototypes", str(prototypes),
            "--labels", str(labels), "--out", str(out), "--epoch", "3",
        ])
        assert code == 0

        selected = [json.loads(line) for line in (out / "selected.jsonl").read_text(encoding="utf-8").splitlines()]
        rejected = [json.loads(line) for line in (out / "rejected.jsonl").read_text(encoding="utf-8").splitlines()]
        assert [item["id"] for item in selected] == ["000001:0"]
        assert {item["id"]: item["reason"] for item in rejected} == {"000001:1": "proto", "000002:2": "depth"}

        bank = load_gt_bank(out / "gt_bank.jsonl")
        entries = bank["000001"].entries
        assert len(entries) == 2
        assert entries[1].epoch_added == 3
        assert entries[1].label.location.z == pytest.approx(20.0)
        assert load_prototype_bank(out / "prototypes.json").feature_dim == 2

    def test_filter_labels_with_dont_care(self, tmp_path, prototypes):
        preds = tmp_path / "preds.jsonl"
        write_jsonl(preds, [
            {"image_id": "000001", "label": format_label_line(make_label(z=20.0, score=0.9)), "sigma": -0.5, "feature": [1.0, 0.0]},
        ])
        labels = tmp_path / "labels"
        labels.mkdir()
        (labels / "000001.txt").write_text(
            format_label_line(make_label(z=50.0)) + "\n"
            + "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n",
            encoding="utf-8",
        )
        out = tmp_path / "out"
        code = main([
            "filter", "--predictions", str(preds), "--prototypes", str(prototypes),
            "--labels", str(labels), "--out", str(out),
        ])
        assert code == 0
        entries = load_gt_bank(out / "gt_bank.jsonl")["000001"].entries
        assert [(e.label.class_name, e.source) for e in entries] == [
            ("Car", EntrySource.SPARSE_GT),
            ("Car", EntrySource.PSEUDO),
        ]

    def test_filter_selection_mode(self, tmp_path, prototypes):
        preds = tmp_path / "preds.jsonl"
        write_jsonl(preds, [
            {"image_id": "000001", "label": format_label_line(make_label(z=20.0, score=0.9)), "sigma": 2.0, "feature": [1.0, 0.0]},
        ])
        out = tmp_path / "out"
        base = ["filter", "--predictions", str(preds), "--prototypes", str(prototypes)]
        assert main([*base, "--out", str(out / "both")]) == 0
        assert (out / "both" / "selected.jsonl").read_text(encoding="utf-8") == ""
        assert main([*base, "--out", str(out / "proto"), "--selection-mode", "proto"]) == 0
        selected = (out / "proto" / "selected.jsonl").read_text(encoding="utf-8").splitlines()
        assert [json.loads(line)["id"] for line in selected] == ["000001:0"]
        assert main([*base, "--out", str(out / "bad"), "--selection-mode", "all"]) == 1

    def test_filter_missing_prototypes(self, tmp_path):
        preds = tmp_path / "preds.jsonl"
        preds.write_text("", encoding="utf-8")
        assert main(["filter", "--predictions", str(preds), "--prototypes", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2


# ═══════════════════════════════════════════════════════════════════════════
# TestEvalAndReport: eval and report
# ═══════════════════════════════════════════════════════════════════════════


class TestEvalAndReport:
    """eval / report"""

    def test_eval_perfect(self, tmp_path):
        labels = tmp_path / "labels"
        preds = tmp_path / "preds"
        labels.mkdir()
        preds.mkdir()
        write_label_file(labels / "000001.txt", [make_label(z=20.0)])
        write_label_file(preds / "000001.txt", [make_label(z=20.0, score=1.0)])

        out = tmp_path / "out"
        assert main(["eval", "--predictions", str(preds), "--labels", str(labels), "--out", str(out)]) == 0
        rows = read_csv(out / "eval.csv")
        assert rows[0] == ["difficulty", "metric", "iou_threshold", "value"]
        assert len(rows) == 7
        assert all(row[3] == "1.000000" for row in rows[1:])

    def test_eval_missing_prediction_file(self, tmp_path):
        labels = tmp_path / "labels"
        preds = tmp_path / "preds"
        labels.mkdir()
        preds.mkdir()
        write_label_file(labels / "000001.txt", [make_label(z=20.0)])

        out = tmp_path / "out"
        assert main(["eval", "--predictions", str(preds), "--labels", str(labels), "--out", str(out)]) == 0
        assert all(row[3] == "0.000000" for row in read_csv(out / "eval.csv")[1:])

    def test_report_growth(self, tmp_path):
        bank = seed_gt_bank({"000001": [make_label(z=20.0)], "000002": [make_label(z=30.0)]})
        save_gt_bank(bank, tmp_path / "gt_bank.jsonl")
        out = tmp_path / "out"
        assert main(["report", "--gt-bank", str(tmp_path / "gt_bank.jsonl"), "--out", str(out), "--epochs", "2"]) == 0
        rows = read_csv(out / "gt_bank_growth.csv")
        assert rows[0] == ["epoch", "bank_size", "sparse_gt", "pseudo"]
        assert [row[1] for row in rows[1:]] == ["2", "2", "2"]


# ═══════════════════════════════════════════════════════════════════════════
# TestSimulate: seeded synthetic runs and config precedence
# ═══════════════════════════════════════════════════════════════════════════


class TestSimulate:
    """simulate"""

    def _simulate(self, out, *extra):
        return main(["simulate", "--out", str(out), "--scenes", "3", "--epochs", "1", *extra])

    def test_byte_identical(self, tmp_path):
        assert self._simulate(tmp_path / "a", "--seed", "42") == 0
        assert self._simulate(tmp_path / "b", "--seed", "42") == 0
        assert self._simulate(tmp_path / "c", "--seed", "42", "--jobs", "4") == 0
        for name in ("report.csv", "report.json"):
            a = (tmp_path / "a" / name).read_bytes()
            assert a == (tmp_path / "b" / name).read_bytes()
            assert a == (tmp_path / "c" / name).read_bytes()

    def test_report_layout(self, tmp_path):
        assert self._simulate(tmp_path, "--seed", "1") == 0
        rows = read_csv(tmp_path / "report.csv")
        assert rows[0][:2] == ["epoch", "bank_size"]
        assert [row[0] for row in rows[1:]] == ["0", "1"]
        assert json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))["seed"] == 1

    def test_config_precedence(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("scenes = 2\nepochs = 5\ntau_road = 0.5\nseed = 9\n", encoding="utf-8")
        out = tmp_path / "out"
        assert main(["simulate", "--out", str(out), "--config", str(config), "--epochs", "0"]) == 0
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert report["seed"] == 9
        assert report["config"]["scenes"] == 2
        assert report["config"]["epochs"] == 0
        assert report["config"]["rapa"]["tau_road"] == 0.5

    def test_bad_config_value(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("scenes = many\n", encoding="utf-8")
        assert main(["simulate", "--out", str(tmp_path), "--config", str(config)]) == 1

    def test_bad_mask_noise(self, tmp_path):
        assert self._simulate(tmp_path, "--mask-noise", "blur") == 1

    def test_selection_mode_reported(self, tmp_path):
        assert self._simulate(tmp_path, "--selection-mode", "depth") == 0
        report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert report["config"]["pbf"]["mode"] == "depth"
        config = tmp_path / "run.cfg"
        config.write_text("selection_mode = proto\n", encoding="utf-8")
        assert self._simulate(tmp_path / "cfg", "--config", str(config)) == 0
        report = json.loads((tmp_path / "cfg" / "report.json").read_text(encoding="utf-8"))
        assert report["config"]["pbf"]["mode"] == "proto"

"""pbf_utils tests

test classes:
- TestSimilarity: cosine similarity, prototype score, cumulative update
- TestBank: prototype initialization, refinement and persistence
- TestDepth: Laplacian depth loss and reliability score
- TestSelection: dual-gate selection, confidence baseline, GT Bank feeding
- TestSelectionMode: single-gate selection modes
- TestPredictionIO: JSON-lines ingestion and output
"""

import json
import math

import numpy as np
import pytest

from rekah_sparse3d.geometry.geometry_utils import BBox2D, Label3D, Vec3
from rekah_sparse3d.kitti_io.kitti_io_utils import (
    EntrySource,
    GtBankEntry,
    GtBankRecord,
    format_label_line,
    parse_label_line,
    seed_gt_bank,
)
from rekah_sparse3d.pbf.pbf_utils import (
    BankConfig,
    PbfConfig,
    Prediction,
    PrototypeBank,
    PrototypeSlot,
    RejectReason,
    confidence_baseline,
    cosine_similarity,
    depth_nll,
    depth_score,
    gt_bank_insert,
    initialize_prototypes,
    load_prototype_bank,
    proto_score,
    read_features_jsonl,
    read_predictions_jsonl,
    refine_prototypes,
    save_prototype_bank,
    select_pseudo_labels,
    update_prototype,
    write_scored_jsonl,
)
from rekah_sparse3d.utils.errors_utils import DomainError, EmptyBankError, ParseError, ValidationError, ZeroFeatureError


# ═══════════════════════════════════════════════════════════════════════════
# test fixtures
# ═══════════════════════════════════════════════════════════════════════════


DONT_CARE_LINE = "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10"


def make_label(x=0.0, z=20.0, score=0.9, class_name="Car") -> Label3D:
    return Label3D(
        class_name=class_name,
        truncation=0.0,
        occlusion=0,
        alpha=0.0,
        bbox2d=BBox2D(10.0, 10.0, 50.0, 40.0),
        dims=(1.5, 1.6, 3.9),
        location=Vec3(x, 1.65, z),
        rotation_y=0.0,
        score=score,
    )


def make_pred(feature, sigma=-0.1, x=0.0, score=0.9, prediction_id="000001:0", class_name="Car") -> Prediction:
    return Prediction(
        label=make_label(x=x, score=score, class_name=class_name),
        feature=np.asarray(feature, dtype=np.float64),
        sigma=sigma,
        image_id="000001",
        prediction_id=prediction_id,
    )


def bank_of(*vectors, class_name="Car") -> PrototypeBank:
    return PrototypeBank(
        slots=[PrototypeSlot(vector=np.asarray(v, dtype=np.float64)) for v in vectors],
        class_name=class_name,
    )


# ═══════════════════════════════════════════════════════════════════════════
# TestSimilarity: cosine similarity, prototype score, cumulative update
# ═══════════════════════════════════════════════════════════════════════════


class TestSimilarity:
    """cosine_similarity / proto_score / update_prototype tests"""

    def test_cosine_examples(self):
        assert cosine_similarity([3.0, 4.0], [3.0, 4.0]) == pytest.approx(1.0)
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0
        assert cosine_similarity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(0.70711, abs=1e-5)

    def test_cosine_zero_vector(self):
        with pytest.raises(ZeroFeatureError):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_cosine_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])

    def test_proto_score_examples(self):
        assert proto_score([0.0, 2.0], bank_of([1.0, 0.0], [0.0, 1.0])) == pytest.approx(1.0)
        assert proto_score([1.0, 1.0], bank_of([1.0, 0.0], [0.0, 1.0])) == pytest.approx(0.70711, abs=1e-5)
        assert proto_score([0.0, 1.0], bank_of([1.0, 0.0])) == pytest.approx(0.0)

    def test_proto_score_scale_invariant(self):
        rng = np.random.default_rng(3)
        bank = bank_of(*rng.normal(size=(8, 16)))
        f = rng.normal(size=16)
        for c in (1e-3, 0.5, 7.0, 1e4):
            assert proto_score(c * f, bank) == pytest.approx(proto_score(f, bank), abs=1e-12)

    def test_proto_score_empty_bank(self):
        with pytest.raises(EmptyBankError):
            proto_score([1.0, 0.0], PrototypeBank())

    def test_update_examples(self):
        p = np.array([1.0, 0.0])
        f = np.array([0.0, 1.0])
        np.testing.assert_array_equal(update_prototype(p, f, 0.0), p)
        np.testing.assert_array_equal(update_prototype(p, f, 1.0), f)
        np.testing.assert_allclose(update_prototype(p, f, 0.5), [0.5, 0.5])

    def test_update_contracts_toward_feature(self):
        rng = np.random.default_rng(11)
        p = rng.normal(size=32)
        f = rng.normal(size=32)
        for beta in (0.005, 0.2, 0.9):
            updated = update_prototype(p, f, beta)
            assert np.linalg.norm(updated - f) == pytest.approx((1.0 - beta) * np.linalg.norm(p - f), rel=1e-12)

    def test_update_domain(self):
        with pytest.raises(DomainError):
            update_prototype([1.0], [0.0], 1.5)
        with pytest.raises(ValidationError):
            update_prototype([1.0, 0.0], [1.0], 0.5)


# ═══════════════════════════════════════════════════════════════════════════
# TestBank: prototype initialization, refinement and persistence
# ═══════════════════════════════════════════════════════════════════════════


class TestBank:
    """initialize_prototypes / refine_prototypes / bank I/O tests"""

    def test_identical_features_merge(self):
        bank = initialize_prototypes([[1.0, 2.0], [1.0, 2.0]])
        assert len(bank) == 1
        assert bank.slots[0].update_count == 2
        np.testing.assert_allclose(bank.slots[0].vector, [1.0, 2.0])

    def test_orthogonal_features_open_slots(self):
        bank = initialize_prototypes([[1.0, 0.0], [0.0, 1.0]])
        assert len(bank) == 2

    def test_full_bank_merges(self):
        bank = initialize_prototypes([[1.0, 0.0], [0.0, 1.0]], BankConfig(capacity=1))
        assert len(bank) == 1
        np.testing.assert_allclose(bank.slots[0].vector, [0.99, 0.01])

    def test_all_identical_inputs_single_slot(self):
        bank = initialize_prototypes([[0.3, -0.2, 0.9]] * 25)
        assert len(bank) == 1
        assert bank.slots[0].update_count == 25

    def test_zero_features_skipped(self):
        bank = initialize_prototypes([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
        assert len(bank) == 1
        assert bank.skipped_zero == 2

    def test_capacity_never_exceeded(self):
        rng = np.random.default_rng(5)
        bank = initialize_prototypes(rng.normal(size=(200, 8)), BankConfig(capacity=4))
        assert len(bank) == 4
        assert sum(slot.update_count for slot in bank.slots) == 200

    def test_refine_empty_list(self):
        bank = bank_of([1.0, 0.0])
        refine_prototypes(bank, [])
        np.testing.assert_array_equal(bank.slots[0].vector, [1.0, 0.0])
        assert bank.slots[0].update_count == 1

    def test_refine_fixed_point(self):
        bank = bank_of([1.0, 0.0], [0.0, 1.0])
        refine_prototypes(bank, [[0.0, 1.0]])
        np.testing.assert_allclose(bank.slots[1].vector, [0.0, 1.0])
        assert bank.slots[1].update_count == 2

    def test_refine_geometric_contraction(self):
        p0 = np.array([1.0, 0.2, -0.3])
        f = np.array([0.8, 0.5, 0.1])
        bank = bank_of(p0)
        refine_prototypes(bank, [f] * 100)
        beta = bank.config.beta_train
        expected = (1.0 - beta) ** 100 * np.linalg.norm(p0 - f)
        assert np.linalg.norm(bank.slots[0].vector - f) == pytest.approx(expected, abs=1e-9)
        assert bank.slots[0].update_count == 101

    def test_refine_empty_bank(self):
        with pytest.raises(EmptyBankError):
            refine_prototypes(PrototypeBank(), [[1.0]])

    def test_bank_file_round_trip(self, tmp_path):
        bank = initialize_prototypes([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], BankConfig(capacity=8, tau_new=0.7))
        path = tmp_path / "prototypes.json"
        save_prototype_bank(bank, path)
        loaded = load_prototype_bank(path)
        assert loaded.config == bank.config
        assert loaded.skipped_zero == 1
        assert [s.update_count for s in loaded.slots] == [s.update_count for s in bank.slots]
        np.testing.assert_array_equal(loaded.slots[1].vector, bank.slots[1].vector)

    def test_bank_file_malformed(self, tmp_path):
        path = tmp_path / "prototypes.json"
        path.write_text(json.dumps({"slots": [{"vector": [0.0, 0.0], "update_count": 1}]}), encoding="utf-8")
        with pytest.raises(ValidationError):
            load_prototype_bank(path)


# ═══════════════════════════════════════════════════════════════════════════
# TestDepth: Laplacian depth loss and reliability score
# ═══════════════════════════════════════════════════════════════════════════


class TestDepth:
    """depth_nll / depth_score tests"""

    def test_nll_examples(self):
        assert depth_nll(10.0, 10.0, 1.0) == 0.0
        assert depth_nll(10.0, 9.0, 1.0) == pytest.approx(1.41421, abs=1e-5)
        assert depth_nll(5.0, 5.0, 2.0) == pytest.approx(0.69315, abs=1e-5)

    def test_nll_domain(self):
        with pytest.raises(DomainError):
            depth_nll(1.0, 1.0, 0.0)
        with pytest.raises(DomainError):
            depth_nll(1.0, 1.0, -1.0)

    @pytest.mark.parametrize("delta", [0.3, 1.0, 4.5])
    def test_nll_minimum(self, delta):
        sigma_star = math.sqrt(2.0) * delta
        h = 1e-4 * sigma_star
        left = depth_nll(0.0, delta, sigma_star - h) - depth_nll(0.0, delta, sigma_star - 2 * h)
        right = depth_nll(0.0, delta, sigma_star + 2 * h) - depth_nll(0.0, delta, sigma_star + h)
        assert left < 0.0 < right

    def test_score_examples(self):
        assert depth_score(0.0) == 1.0
        assert depth_score(1.0) == pytest.approx(0.36788, abs=1e-5)
        assert depth_score(-0.5) == pytest.approx(1.64872, abs=1e-5)

    def test_score_decreasing(self):
        sigmas = np.linspace(-3.0, 3.0, 61)
        scores = [depth_score(float(s)) for s in sigmas]
        assert all(a > b for a, b in zip(scores, scores[1:]))

    def test_score_non_finite(self):
        with pytest.raises(DomainError):
            depth_score(math.nan)


# ═══════════════════════════════════════════════════════════════════════════
# TestSelection: dual-gate selection, confidence baseline, GT Bank feeding
# ═══════════════════════════════════════════════════════════════════════════


class TestSelection:
    """select_pseudo_labels / confidence_baseline / gt_bank_insert tests"""

    def test_selected(self):
        result = select_pseudo_labels([make_pred([1.0, 0.0], sigma=-0.1)], bank_of([1.0, 0.0]))
        assert len(result.selected) == 1
        item = result.selected[0]
        assert item.s_depth == pytest.approx(math.exp(0.1))
        assert item.s_proto == pytest.approx(1.0)
        assert item.reason is None

    def test_depth_rejected(self):
        result = select_pseudo_labels([make_pred([1.0, 0.0], sigma=0.5)], bank_of([1.0, 0.0]))
        item = result.rejected[0]
        assert item.reason is RejectReason.DEPTH
        assert item.s_depth == pytest.approx(0.60653, abs=1e-5)
        assert item.s_proto is None

    def test_proto_rejected(self):
        result = select_pseudo_labels([make_pred([0.0, 1.0], sigma=-0.1)], bank_of([1.0, 0.0]))
        item = result.rejected[0]
        assert item.reason is RejectReason.PROTO
        assert item.s_proto == pytest.approx(0.0)

    def test_thresholds_are_strict(self):
        result = select_pseudo_labels([make_pred([1.0, 0.0], sigma=0.0)], bank_of([1.0, 0.0]))
        assert result.rejected[0].reason is RejectReason.DEPTH
        cfg = PbfConfig(tau_depth=0.5, tau_proto=1.0)
        result = select_pseudo_labels([make_pred([1.0, 0.0], sigma=0.0)], bank_of([1.0, 0.0]), cfg)
        assert result.rejected[0].reason is RejectReason.PROTO

    def test_zero_feature_rejected_by_proto(self):
        result = select_pseudo_labels([make_pred([0.0, 0.0], sigma=-1.0)], bank_of([1.0, 0.0]))
        assert result.rejected[0].reason is RejectReason.PROTO
        assert result.rejected[0].s_proto is None

    def test_empty_bank(self):
        with pytest.raises(EmptyBankError):
            select_pseudo_labels([make_pred([1.0, 0.0])], PrototypeBank())

    def test_partition_and_monotonicity(self):
        rng = np.random.default_rng(17)
        bank = bank_of(*rng.normal(size=(6, 8)))
        preds = [
            make_pred(rng.normal(size=8), sigma=float(rng.normal(-0.3, 0.5)), prediction_id=f"a:{i}")
            for i in range(200)
        ]
        previous = None
        for tau_depth, tau_proto in [(0.5, 0.0), (0.8, 0.3), (1.0, 0.5), (1.2, 0.8)]:
            result = select_pseudo_labels(preds, bank, PbfConfig(tau_depth=tau_depth, tau_proto=tau_proto))
            assert len(result.selected) + len(result.rejected) == len(preds)
            ids = [s.prediction_id for s in result.selected + result.rejected]
            assert len(set(ids)) == len(preds)
            selected = {s.prediction_id for s in result.selected}
            if previous is not None:
                assert selected <= previous
            previous = selected

    def test_confidence_baseline(self):
        preds = [
            make_pred([1.0], score=0.5, prediction_id="b"),
            make_pred([1.0], score=0.9, prediction_id="c"),
            make_pred([1.0], score=0.9, prediction_id="a"),
        ]
        assert [p.prediction_id for p in confidence_baseline(preds, 2)] == ["a", "c"]
        assert confidence_baseline(preds, 0) == []

    def test_gt_bank_insert(self):
        bank = {}
        gt_bank_insert(bank, "000001", [make_label()], epoch=1)
        assert len(bank["000001"].entries) == 1
        gt_bank_insert(bank, "000001", [make_label()], epoch=2)
        assert len(bank["000001"].entries) == 1
        gt_bank_insert(bank, "000001", [make_label(x=-20.0), make_label(x=20.0)], epoch=2)
        entries = bank["000001"].entries
        assert [e.label.location.x for e in entries] == [0.0, -20.0, 20.0]
        assert all(e.source is EntrySource.PSEUDO for e in entries)
        assert [e.epoch_added for e in entries] == [1, 2, 2]

    def test_gt_bank_insert_keeps_scores(self):
        bank = seed_gt_bank({"000001": [make_label(x=-10.0)]})
        result = select_pseudo_labels([make_pred([1.0, 0.0], sigma=-0.2)], bank_of([1.0, 0.0]))
        gt_bank_insert(bank, "000001", result.selected, epoch=3)
        entry = bank["000001"].entries[-1]
        assert entry.s_depth == pytest.approx(math.exp(0.2))
        assert entry.s_proto == pytest.approx(1.0)

    def test_gt_bank_insert_dedups_against_sparse(self):
        bank = seed_gt_bank({"000001": [make_label()]})
        gt_bank_insert(bank, "000001", [make_label()], epoch=1)
        assert len(bank["000001"].entries) == 1

    def test_seed_leaves_out_dont_care(self):
        bank = seed_gt_bank({"000001": [make_label(x=-10.0), parse_label_line(DONT_CARE_LINE)]})
        assert [e.label.class_name for e in bank["000001"].entries] == ["Car"]

    def test_gt_bank_insert_next_to_dont_care(self):
        dont_care = parse_label_line(DONT_CARE_LINE)
        bank = {"000001": GtBankRecord("000001", [GtBankEntry(dont_care, EntrySource.SPARSE_GT, 0)])}
        result = select_pseudo_labels([make_pred([1.0, 0.0], sigma=-0.2)], bank_of([1.0, 0.0]))
        gt_bank_insert(bank, "000001", result.selected, epoch=1)
        assert [e.source for e in bank["000001"].entries] == [EntrySource.SPARSE_GT, EntrySource.PSEUDO]
        gt_bank_insert(bank, "000001", [dont_care], epoch=1)
        assert len(bank["000001"].entries) == 2

    def test_gt_bank_dedup_within_class(self):
        bank = seed_gt_bank({"000001": [make_label()]})
        gt_bank_insert(bank, "000001", [make_label(class_name="Van")], epoch=1)
        assert [e.label.class_name for e in bank["000001"].entries] == ["Car", "Van"]

    def test_other_class_rejected(self):
        result = select_pseudo_labels([make_pred([1.0, 0.0], sigma=-0.5, class_name="Pedestrian")], bank_of([1.0, 0.0]))
        assert result.selected == []
        item = result.rejected[0]
        assert item.reason is RejectReason.CLASS
        assert item.s_depth == pytest.approx(math.exp(0.5))
        assert item.s_proto is None

    def test_banks_keyed_by_class(self):
        banks = {"Car": bank_of([1.0, 0.0]), "Pedestrian": bank_of([0.0, 1.0], class_name="Pedestrian")}
        preds = [
            make_pred([1.0, 0.0], prediction_id="a:0"),
            make_pred([0.0, 1.0], prediction_id="a:1", class_name="Pedestrian"),
            make_pred([1.0, 0.0], prediction_id="a:2", class_name="Pedestrian"),
            make_pred([1.0, 0.0], prediction_id="a:3", class_name="Cyclist"),
        ]
        result = select_pseudo_labels(preds, banks)
        assert [s.prediction_id for s in result.selected] == ["a:0", "a:1"]
        assert [s.reason for s in result.rejected] == [RejectReason.PROTO, RejectReason.CLASS]

    def test_keyed_banks_must_be_initialized(self):
        with pytest.raises(EmptyBankError):
            select_pseudo_labels([make_pred([1.0, 0.0])], {"Car": bank_of([1.0, 0.0]), "Van": PrototypeBank()})
        with pytest.raises(EmptyBankError):
            select_pseudo_labels([make_pred([1.0, 0.0])], {})


class TestSelectionMode:
    """PbfConfig.mode tests"""

    def test_depth_only_ignores_prototypes(self):
        cfg = PbfConfig(mode="depth")
        result = select_pseudo_labels([make_pred([0.0, 1.0], sigma=-0.1)], bank_of([1.0, 0.0]), cfg)
        assert len(result.selected) == 1
        assert result.selected[0].s_proto == pytest.approx(0.0)
        result = select_pseudo_labels([make_pred([0.0, 1.0], sigma=0.5)], bank_of([1.0, 0.0]), cfg)
        assert result.rejected[0].reason is RejectReason.DEPTH

    def test_depth_only_accepts_zero_feature(self):
        cfg = PbfConfig(mode="depth")
        result = select_pseudo_labels([make_pred([0.0, 0.0], sigma=-0.1)], bank_of([1.0, 0.0]), cfg)
        assert result.selected[0].s_proto is None

    def test_proto_only_ignores_depth(self):
        cfg = PbfConfig(mode="proto")
        result = select_pseudo_labels([make_pred([1.0, 0.0], sigma=2.0)], bank_of([1.0, 0.0]), cfg)
        assert len(result.selected) == 1
        assert result.selected[0].s_depth == pytest.approx(math.exp(-2.0))
        result = select_pseudo_labels([make_pred([0.0, 1.0], sigma=2.0)], bank_of([1.0, 0.0]), cfg)
        assert result.rejected[0].reason is RejectReason.PROTO

    def test_single_gate_selects_superset(self):
        rng = np.random.default_rng(23)
        bank = bank_of(*rng.normal(size=(4, 8)))
        preds = [
            make_pred(rng.normal(size=8), sigma=float(rng.normal(-0.2, 0.5)), prediction_id=f"a:{i}")
            for i in range(200)
        ]
        both = {s.prediction_id for s in select_pseudo_labels(preds, bank, PbfConfig(tau_proto=0.3)).selected}
        for mode in ("depth", "proto"):
            cfg = PbfConfig(tau_proto=0.3, mode=mode)
            assert both <= {s.prediction_id for s in select_pseudo_labels(preds, bank, cfg).selected}

    def test_unknown_mode(self):
        with pytest.raises(ValidationError):
            PbfConfig(mode="confidence")

    def test_no_rapa_keeps_mode(self):
        cfg = PbfConfig.no_rapa(mode="proto")
        assert cfg.tau_depth == pytest.approx(0.7)
        assert cfg.mode == "proto"


# ═══════════════════════════════════════════════════════════════════════════
# TestPredictionIO: JSON-lines ingestion and output
# ═══════════════════════════════════════════════════════════════════════════


class TestPredictionIO:
    """read_predictions_jsonl / read_features_jsonl / write_scored_jsonl tests"""

    def _write(self, path, records):
        path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")

    def test_read_predictions(self, tmp_path):
        line = format_label_line(make_label(score=0.75))
        path = tmp_path / "preds.jsonl"
        self._write(path, [
            {"image_id": "000001", "label": line, "sigma": -0.2, "feature": [1.0, 0.0]},
            {"image_id": "000002", "label": line, "sigma": 0.1, "feature": [0.0, 1.0], "id": "custom"},
        ])
        preds = read_predictions_jsonl(path)
        assert [p.prediction_id for p in preds] == ["000001:0", "custom"]
        assert preds[0].score == pytest.approx(0.75)
        np.testing.assert_array_equal(preds[1].feature, [0.0, 1.0])

    def test_label_needs_score(self, tmp_path):
        path = tmp_path / "preds.jsonl"
        line = format_label_line(make_label(score=None))
        self._write(path, [{"image_id": "a", "label": line, "sigma": 0.0, "feature": [1.0]}])
        with pytest.raises(ParseError):
            read_predictions_jsonl(path)

    def test_duplicate_ids(self, tmp_path):
        line = format_label_line(make_label())
        record = {"image_id": "a", "label": line, "sigma": 0.0, "feature": [1.0], "id": "x"}
        path = tmp_path / "preds.jsonl"
        self._write(path, [record, record])
        with pytest.raises(ParseError) as info:
            read_predictions_jsonl(path)
        assert info.value.line_number == 2

    def test_missing_key(self, tmp_path):
        path = tmp_path / "preds.jsonl"
        self._write(path, [{"image_id": "a", "sigma": 0.0, "feature": [1.0]}])
        with pytest.raises(ParseError):
            read_predictions_jsonl(path)

    def test_read_features(self, tmp_path):
        path = tmp_path / "features.jsonl"
        self._write(path, [{"feature": [1.0, 2.0]}, {"feature": [3.0, 4.0], "image_id": "x"}])
        features = read_features_jsonl(path)
        assert len(features) == 2
        np.testing.assert_array_equal(features[1], [3.0, 4.0])

    def test_write_scored(self, tmp_path):
        result = select_pseudo_labels(
            [make_pred([1.0, 0.0], sigma=-0.1), make_pred([1.0, 0.0], sigma=0.5, prediction_id="000001:1")],
            bank_of([1.0, 0.0]),
        )
        path = tmp_path / "rejected.jsonl"
        write_scored_jsonl(path, result.rejected)
        records = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]
        assert len(records) == 1
        assert records[0]["id"] == "000001:1"
        assert records[0]["reason"] == "depth"
        assert records[0]["s_proto"] is None

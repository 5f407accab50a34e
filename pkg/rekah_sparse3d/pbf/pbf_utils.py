"""prototype-based pseudo-label filtering

this module contains:
- PrototypeBank: fixed-capacity feature prototypes with cumulative updates
- depth_nll / depth_score: Laplacian depth loss and exp(-sigma) reliability
- select_pseudo_labels: class check, depth gate, then prototype similarity gate
- refine_prototypes / gt_bank_insert: the serial mutations after selection
- JSON-lines I/O for the detector boundary

sigma on a Prediction is the raw log-scale head output (may be negative);
depth_nll takes a positive scale.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from rekah_sparse3d.evalkit.evalkit_utils import iou_bev
from rekah_sparse3d.geometry.geometry_utils import Label3D
from rekah_sparse3d.kitti_io.kitti_io_utils import (
    GT_BANK_DEDUP_IOU,
    EntrySource,
    GtBank,
    GtBankEntry,
    GtBankRecord,
    format_label_line,
    has_box,
    parse_label_line,
)
from rekah_sparse3d.utils.errors_utils import (
    DomainError,
    EmptyBankError,
    ParseError,
    ValidationError,
    ZeroFeatureError,
)
from rekah_sparse3d.utils.logging_utils import Logger

SQRT2 = math.sqrt(2.0)


# ═══════════════════════════════════════════════════════════════════════════
# feature similarity
# ═══════════════════════════════════════════════════════════════════════════


def _as_feature(values) -> np.ndarray:
    f = np.asarray(values, dtype=np.float64).ravel()
    if not np.all(np.isfinite(f)):
        raise ValidationError("feature has non-finite values")
    return f


def cosine_similarity(a, b) -> float:
    """a.b / (|a| |b|), clipped into [-1, 1]"""
    a = _as_feature(a)
    b = _as_feature(b)
    if a.shape != b.shape:
        raise ValidationError(f"feature dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroFeatureError("cosine similarity of a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def update_prototype(p, f, beta: float) -> np.ndarray:
    """(1 - beta) * p + beta * f"""
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must be in [0, 1], got {beta}")
    p = _as_feature(p)
    f = _as_feature(f)
    if p.shape != f.shape:
        raise ValidationError(f"feature dimensions differ: {p.shape[0]} vs {f.shape[0]}")
    return (1.0 - beta) * p + beta * f


# ═══════════════════════════════════════════════════════════════════════════
# prototype bank
# ═══════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class BankConfig:
    capacity: int = 256
    tau_new: float = 0.8
    beta_init: float = 0.01
    beta_train: float = 0.005
    # None: taken from the first feature
    feature_dim: Optional[int] = None

    def __post_init__(self):
        if self.capacity < 1:
            raise ValidationError(f"capacity must be >= 1, got {self.capacity}")
        if not -1.0 < self.tau_new <= 1.0:
            raise ValidationError(f"tau_new must be in (-1, 1], got {self.tau_new}")
        for name in ("beta_init", "beta_train"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {value}")
        if self.feature_dim is not None and self.feature_dim < 1:
            raise ValidationError(f"feature_dim must be >= 1, got {self.feature_dim}")


@dataclass(eq=False)
class PrototypeSlot:
    vector: np.ndarray
    update_count: int = 1


@dataclass(eq=False)
class PrototypeBank:
    """prototypes of one class; slot order is insertion order"""

    config: BankConfig = field(default_factory=BankConfig)
    slots: List[PrototypeSlot] = field(default_factory=list)
    class_name: str = "Car"
    skipped_zero: int = 0

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def feature_dim(self) -> Optional[int]:
        if self.slots:
            return int(self.slots[0].vector.shape[0])
        return self.config.feature_dim

    def check_feature(self, f) -> np.ndarray:
        f = _as_feature(f)
        dim = self.feature_dim
        if dim is not None and f.shape[0] != dim:
            raise ValidationError(f"feature has dimension {f.shape[0]}, bank expects {dim}")
        return f

    def similarities(self, f) -> np.ndarray:
        """cosine similarity of f to every slot"""
        if not self.slots:
            raise EmptyBankError("prototype bank is empty; initialize it first")
        f = self.check_feature(f)
        norm = np.linalg.norm(f)
        if norm == 0.0:
            raise ZeroFeatureError("cosine similarity of a zero vector")
        matrix = np.stack([slot.vector for slot in self.slots])
        sims = matrix @ f / (np.linalg.norm(matrix, axis=1) * norm)
        return np.clip(sims, -1.0, 1.0)

    def nearest(self, f) -> Tuple[int, float]:
        """argmax slot (lowest index on ties) and its similarity"""
        sims = self.similarities(f)
        index = int(np.argmax(sims))
        return index, float(sims[index])

    def merge(self, index: int, f, beta: float) -> None:
        slot = self.slots[index]
        slot.vector = update_prototype(slot.vector, f, beta)
        slot.update_count += 1

    def append(self, f) -> None:
        if len(self.slots) >= self.config.capacity:
            raise ValidationError(f"prototype bank is full ({self.config.capacity} slots)")
        self.slots.append(PrototypeSlot(vector=self.check_feature(f).copy()))

    def to_dict(self) -> dict:
        return {
            "class_name": self.class_name,
            "config": asdict(self.config),
            "skipped_zero": self.skipped_zero,
            "slots": [
                {"vector": slot.vector.tolist(), "update_count": slot.update_count}
                for slot in self.slots
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PrototypeBank":
        try:
            bank = cls(
                config=BankConfig(**data.get("config", {})),
                class_name=str(data.get("class_name", "Car")),
                skipped_zero=int(data.get("skipped_zero", 0)),
            )
            for item in data["slots"]:
                vector = bank.check_feature(item["vector"])
                if not np.any(vector):
                    raise ValidationError("prototype slot holds a zero vector")
                count = int(item["update_count"])
                if count < 1:
                    raise ValidationError(f"update_count must be >= 1, got {count}")
                bank.slots.append(PrototypeSlot(vector=vector, update_count=count))
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed prototype bank: {e}") from None
        if len(bank.slots) > bank.config.capacity:
            raise ValidationError(f"{len(bank.slots)} slots exceed capacity {bank.config.capacity}")
        return bank


def save_prototype_bank(bank: PrototypeBank, path) -> None:
    Path(path).write_text(json.dumps(bank.to_dict(), sort_keys=True) + "\n", encoding="utf-8")


def load_prototype_bank(path) -> PrototypeBank:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: malformed JSON: {e.msg}") from None
    return PrototypeBank.from_dict(data)


def proto_score(f, bank: PrototypeBank) -> float:
    """max cosine similarity of f to the bank's prototypes"""
    return bank.nearest(f)[1]


def initialize_prototypes(features: Iterable, config: BankConfig = None, class_name: str = "Car") -> PrototypeBank:
    """build a bank from ground-truth features in arrival order

    a feature merges into its nearest slot (beta_init) when the similarity
    reaches tau_new, or when the bank is already full; otherwise it opens a
    new slot. zero features are skipped and counted.

    Args:
        features: iterable of feature vectors
        config: bank parameters
        class_name: class the bank describes

    Returns:
        initialized PrototypeBank
    """
    bank = PrototypeBank(config=config or BankConfig(), class_name=class_name)
    for f in features:
        f = bank.check_feature(f)
        if not np.any(f):
            bank.skipped_zero += 1
            Logger.instance().debug(f"skipping zero feature ({bank.skipped_zero} so far)")
            continue
        if bank.slots:
            index, similarity = bank.nearest(f)
            if similarity >= bank.config.tau_new or len(bank.slots) >= bank.config.capacity:
                bank.merge(index, f, bank.config.beta_init)
                continue
        bank.append(f)
    return bank


def refine_prototypes(bank: PrototypeBank, selected_features: Iterable) -> PrototypeBank:
    """merge each selected feature into its nearest slot with beta_train (in place)"""
    if not bank.slots:
        raise EmptyBankError("prototype bank is empty; initialize it first")
    for f in selected_features:
        f = bank.check_feature(f)
        if not np.any(f):
            Logger.instance().debug("zero feature skipped during refinement")
            continue
        index, _ = bank.nearest(f)
        bank.merge(index, f, bank.config.beta_train)
    return bank


# ═══════════════════════════════════════════════════════════════════════════
# depth reliability
# ═══════════════════════════════════════════════════════════════════════════


def depth_nll(d_gt: float, d_pred: float, sigma: float) -> float:
    """Laplacian aleatoric loss sqrt(2)/sigma * |d_gt - d_pred| + log(sigma); sigma is a scale"""
    if not (math.isfinite(sigma) and sigma > 0.0):
        raise DomainError(f"depth_nll needs sigma > 0, got {sigma}")
    return SQRT2 / sigma * abs(d_gt - d_pred) + math.log(sigma)


def depth_score(sigma: float) -> float:
    """exp(-sigma) of the raw log-scale output"""
    if not math.isfinite(sigma):
        raise DomainError(f"depth_score needs a finite sigma, got {sigma}")
    try:
        return math.exp(-sigma)
    except OverflowError:
        return math.inf


# ═══════════════════════════════════════════════════════════════════════════
# selection
# ═══════════════════════════════════════════════════════════════════════════


SELECTION_MODES = ("both", "depth", "proto")


@dataclass(frozen=True)
class PbfConfig:
    """gate thresholds; mode picks which gates run (both, depth only, proto only)"""

    tau_depth: float = 1.0
    tau_proto: float = 0.85
    mode: str = "both"

    def __post_init__(self):
        if self.mode not in SELECTION_MODES:
            raise ValidationError(f"selection mode must be one of {', '.join(SELECTION_MODES)}, got {self.mode!r}")
        if not math.isfinite(self.tau_depth):
            raise ValidationError(f"tau_depth must be finite, got {self.tau_depth}")
        if not -1.0 < self.tau_proto <= 1.0:
            raise ValidationError(f"tau_proto must be in (-1, 1], got {self.tau_proto}")

    @classmethod
    def no_rapa(cls, mode: str = "both") -> "PbfConfig":
        """thresholds for training without patch augmentation"""
        return cls(tau_depth=0.7, mode=mode)

    @property
    def uses_depth(self) -> bool:
        return self.mode != "proto"

    @property
    def uses_proto(self) -> bool:
        return self.mode != "depth"


@dataclass(eq=False)
class Prediction:
    """one detector output at the filtering boundary"""

    label: Label3D
    feature: np.ndarray
    sigma: float
    image_id: str
    prediction_id: str

    def __post_init__(self):
        self.feature = _as_feature(self.feature)
        if self.label.score is None or not 0.0 <= self.label.score <= 1.0:
            raise ValidationError(f"{self.prediction_id}: score must be in [0, 1], got {self.label.score}")
        if not math.isfinite(self.sigma):
            raise ValidationError(f"{self.prediction_id}: sigma must be finite")

    @property
    def score(self) -> float:
        return self.label.score


class RejectReason(str, Enum):
    CLASS = "class"
    DEPTH = "depth"
    PROTO = "proto"


@dataclass(eq=False)
class ScoredPrediction:
    prediction: Prediction
    s_depth: float
    s_proto: Optional[float] = None
    reason: Optional[RejectReason] = None

    @property
    def prediction_id(self) -> str:
        return self.prediction.prediction_id

    @property
    def label(self) -> Label3D:
        return self.prediction.label

    @property
    def feature(self) -> np.ndarray:
        return self.prediction.feature


class SelectionResult(NamedTuple):
    selected: List[ScoredPrediction]
    rejected: List[ScoredPrediction]


def score_prediction(pred: Prediction, bank: PrototypeBank, cfg: PbfConfig) -> ScoredPrediction:
    """class check, depth gate, then prototype gate; gates are strict and cfg.mode may skip one"""
    s_depth = depth_score(pred.sigma)
    if pred.label.class_name != bank.class_name:
        return ScoredPrediction(pred, s_depth, None, RejectReason.CLASS)
    if cfg.uses_depth and not s_depth > cfg.tau_depth:
        return ScoredPrediction(pred, s_depth, None, RejectReason.DEPTH)
    if not np.any(pred.feature):
        Logger.instance().debug(f"{pred.prediction_id}: zero feature, no prototype score")
        if cfg.uses_proto:
            return ScoredPrediction(pred, s_depth, None, RejectReason.PROTO)
        return ScoredPrediction(pred, s_depth)
    s_proto = proto_score(pred.feature, bank)
    if cfg.uses_proto and not s_proto > cfg.tau_proto:
        return ScoredPrediction(pred, s_depth, s_proto, RejectReason.PROTO)
    return ScoredPrediction(pred, s_depth, s_proto)


def select_pseudo_labels(
    preds: Sequence[Prediction],
    bank: Union[PrototypeBank, Mapping[str, PrototypeBank]],
    cfg: PbfConfig = None,
) -> SelectionResult:
    """partition predictions into selected and rejected, keeping input order

    Args:
        preds: detector outputs for one image (or a batch)
        bank: one PrototypeBank, or banks keyed by class name
        cfg: thresholds and selection mode

    Returns:
        SelectionResult; predictions of a class without a bank are rejected with reason "class"
    """
    banks = {bank.class_name: bank} if isinstance(bank, PrototypeBank) else dict(bank)
    if not banks or not all(b.slots for b in banks.values()):
        raise EmptyBankError("prototype bank is empty; initialize it first")
    cfg = cfg or PbfConfig()
    result = SelectionResult([], [])
    for pred in preds:
        class_bank = banks.get(pred.label.class_name)
        if class_bank is None:
            scored = ScoredPrediction(pred, depth_score(pred.sigma), None, RejectReason.CLASS)
        else:
            scored = score_prediction(pred, class_bank, cfg)
        (result.selected if scored.reason is None else result.rejected).append(scored)
    return result


def confidence_baseline(preds: Sequence[Prediction], k: int) -> List[Prediction]:
    """top-k by detector confidence; ties broken by prediction id"""
    ranked = sorted(preds, key=lambda p: (-p.score, p.prediction_id))
    return ranked[:max(0, k)]


# ═══════════════════════════════════════════════════════════════════════════
# GT Bank feeding
# ═══════════════════════════════════════════════════════════════════════════


def gt_bank_insert(bank: GtBank, image_id: str, selected: Sequence, epoch: int) -> GtBank:
    """append selected labels as pseudo entries unless they duplicate an existing box

    Args:
        bank: GT Bank, updated in place
        image_id: image the selections belong to
        selected: ScoredPrediction items (or bare Label3D)
        epoch: epoch_added for the new entries

    Returns:
        the same bank
    """
    record = bank.setdefault(image_id, GtBankRecord(image_id=image_id))
    for item in selected:
        if isinstance(item, ScoredPrediction):
            label, s_depth, s_proto = item.label, item.s_depth, item.s_proto
        else:
            label, s_depth, s_proto = item, None, None
        if not has_box(label):
            continue
        if any(
            iou_bev(label, entry.label) > GT_BANK_DEDUP_IOU
            for entry in record.entries
            if entry.label.class_name == label.class_name and has_box(entry.label)
        ):
            continue
        record.entries.append(GtBankEntry(
            label=label,
            source=EntrySource.PSEUDO,
            epoch_added=epoch,
            s_depth=s_depth,
            s_proto=s_proto,
        ))
    return bank


# ═══════════════════════════════════════════════════════════════════════════
# JSON-lines I/O
# ═══════════════════════════════════════════════════════════════════════════


def parse_prediction(data: Mapping, default_id: str, line_number: Optional[int] = None) -> Prediction:
    try:
        image_id = str(data["image_id"])
        label = parse_label_line(data["label"], line_number)
        sigma = float(data["sigma"])
        feature = data["feature"]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed prediction: {e}", line_number) from None
    if label.score is None:
        raise ParseError("prediction label needs a score (16 fields)", line_number)
    try:
        return Prediction(
            label=label,
            feature=feature,
            sigma=sigma,
            image_id=image_id,
            prediction_id=str(data.get("id", default_id.format(image_id=image_id))),
        )
    except (ValueError, TypeError, ValidationError) as e:
        raise ParseError(str(e), line_number) from None


def read_predictions_jsonl(path) -> List[Prediction]:
    """{image_id, label, sigma, feature[, id]} per line; default id is <image_id>:<position in file>"""
    preds: List[Prediction] = []
    seen = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"malformed JSON: {e.msg}", line_number) from None
            if not isinstance(data, dict):
                raise ParseError("prediction must be a JSON object", line_number)
            pred = parse_prediction(data, "{image_id}:" + str(len(preds)), line_number)
            if pred.prediction_id in seen:
                raise ParseError(f"duplicate prediction id {pred.prediction_id}", line_number)
            seen.add(pred.prediction_id)
            preds.append(pred)
    return preds


def read_features_jsonl(path) -> List[np.ndarray]:
    """{"feature": [...]} per line (other keys ignored)"""
    features = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                features.append(_as_feature(json.loads(line)["feature"]))
            except json.JSONDecodeError as e:
                raise ParseError(f"malformed JSON: {e.msg}", line_number) from None
            except (KeyError, TypeError, ValueError, ValidationError) as e:
                raise ParseError(f"malformed feature record: {e}", line_number) from None
    return features


def scored_to_dict(item: ScoredPrediction) -> dict:
    pred = item.prediction
    return {
        "id": pred.prediction_id,
        "image_id": pred.image_id,
        "label": format_label_line(pred.label),
        "sigma": pred.sigma,
        "feature": pred.feature.tolist(),
        "s_depth": item.s_depth,
        "s_proto": item.s_proto,
        "reason": None if item.reason is None else item.reason.value,
    }


def write_scored_jsonl(path, items: Iterable[ScoredPrediction]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for item in items:
            f.write(json.dumps(scored_to_dict(item), sort_keys=True, separators=(",", ":")) + "\n")

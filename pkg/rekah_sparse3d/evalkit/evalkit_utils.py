"""rotated box overlap and KITTI-style AP_R40 evaluation

this module contains:
- BevBox, rotated_bev_iou, iou3d, iou_bev: overlap of yawed boxes
- DifficultyRule, DIFFICULTY_RULES: Easy / Moderate / Hard eligibility
- match_image, ap_from_matches, ap_r40, evaluate_dataset: AP_R40 protocol
- selection_metrics: precision / recall of a pseudo-label selection

the intersection of two yawed rectangles is found by Sutherland-Hodgman
clipping: the subject polygon is cut by every edge of the clip polygon in
turn, then the remaining polygon's area is taken with the shoelace formula.
"""

import csv
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from rekah_sparse3d.geometry.geometry_utils import Label3D
from rekah_sparse3d.utils.errors_utils import ValidationError

MIN_INTERSECTION_AREA = 1e-12
RECALL_POINTS = 40


# ═══════════════════════════════════════════════════════════════════════════
# rotated overlap
# ═══════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class BevBox:
    """bird's-eye footprint: center (x, z), size (w, l), yaw about y"""

    x: float
    z: float
    w: float
    l: float
    yaw: float

    def __post_init__(self):
        if self.w <= 0.0 or self.l <= 0.0:
            raise ValidationError(f"BEV box size must be positive, got ({self.w}, {self.l})")

    @property
    def area(self) -> float:
        return self.w * self.l

    def corners(self) -> np.ndarray:
        """4x2 (x, z) corners, counter-clockwise"""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        local = np.array([
            [self.w, self.l],
            [-self.w, self.l],
            [-self.w, -self.l],
            [self.w, -self.l],
        ]) / 2.0
        x = c * local[:, 0] + s * local[:, 1]
        z = -s * local[:, 0] + c * local[:, 1]
        return np.stack([x + self.x, z + self.z], axis=1)


def bev_box_from_label(label: Label3D) -> BevBox:
    """footprint of a label (matches geometry.label_footprint)"""
    return BevBox(x=label.location.x, z=label.location.z, w=label.w, l=label.l, yaw=label.rotation_y)


def _signed_area(polygon: np.ndarray) -> float:
    x, y = polygon[:, 0], polygon[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman: part of subject inside the convex clip polygon"""
    orientation = 1.0 if _signed_area(clip) >= 0.0 else -1.0
    output = [p for p in subject]

    for i in range(len(clip)):
        if not output:
            break
        a, b = clip[i], clip[(i + 1) % len(clip)]
        edge = b - a

        def side(p):
            return orientation * (edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0]))

        current_input, output = output, []
        for j in range(len(current_input)):
            cur, prev = current_input[j], current_input[j - 1]
            s_cur, s_prev = side(cur), side(prev)
            if s_cur >= 0.0:
                if s_prev < 0.0:
                    t = s_prev / (s_prev - s_cur)
                    output.append(prev + t * (cur - prev))
                output.append(cur)
            elif s_prev >= 0.0:
                t = s_prev / (s_prev - s_cur)
                output.append(prev + t * (cur - prev))

    if len(output) < 3:
        return np.zeros((0, 2))
    return np.array(output)


def bev_intersection_area(a: BevBox, b: BevBox) -> float:
    """area of the footprint intersection (0 below 1e-12)"""
    polygon = _clip_polygon(a.corners(), b.corners())
    if len(polygon) < 3:
        return 0.0
    area = abs(_signed_area(polygon))
    return area if area >= MIN_INTERSECTION_AREA else 0.0


def rotated_bev_iou(a: BevBox, b: BevBox) -> float:
    """IoU of two yawed rectangles"""
    inter = bev_intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    union = a.area + b.area - inter
    return float(min(1.0, max(0.0, inter / union)))


def iou_bev(a: Label3D, b: Label3D) -> float:
    """BEV IoU of two labels"""
    return rotated_bev_iou(bev_box_from_label(a), bev_box_from_label(b))


def iou3d(a: Label3D, b: Label3D) -> float:
    """3D IoU: footprint intersection times vertical overlap, over volume union

    boxes span [y - h, y] (bottom-center convention, y down).
    """
    inter_area = bev_intersection_area(bev_box_from_label(a), bev_box_from_label(b))
    if inter_area == 0.0:
        return 0.0
    a_top, a_bottom = a.location.y - a.h, a.location.y
    b_top, b_bottom = b.location.y - b.h, b.location.y
    overlap_h = min(a_bottom, b_bottom) - max(a_top, b_top)
    if overlap_h <= 0.0:
        return 0.0
    inter_vol = inter_area * overlap_h
    union = a.h * a.w * a.l + b.h * b.w * b.l - inter_vol
    return float(min(1.0, max(0.0, inter_vol / union)))


# ═══════════════════════════════════════════════════════════════════════════
# difficulty rules
# ═══════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class DifficultyRule:
    """KITTI devkit eligibility thresholds"""

    name: str
    min_box_height_px: float
    max_occlusion: int
    max_truncation: float

    def is_eligible(self, label: Label3D) -> bool:
        return (
            label.bbox2d.bottom - label.bbox2d.top >= self.min_box_height_px
            and label.occlusion <= self.max_occlusion
            and label.truncation <= self.max_truncation
        )


DIFFICULTY_RULES: Dict[str, DifficultyRule] = {
    "Easy": DifficultyRule("Easy", 40.0, 0, 0.15),
    "Moderate": DifficultyRule("Moderate", 25.0, 1, 0.30),
    "Hard": DifficultyRule("Hard", 25.0, 2, 0.50),
}

# neighbouring classes count as "don't care" for the evaluated class (devkit)
NEIGHBOR_CLASSES = {"Car": ("Van",), "Pedestrian": ("Person_sitting",)}


# ═══════════════════════════════════════════════════════════════════════════
# AP_R40
# ═══════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class MatchOutcome:
    """one ranked detection after matching: true positive or false positive"""

    score: float
    is_tp: bool
    order: Tuple[int, int]  # (image index, rank within image) for stable pooling


@dataclass
class ImageMatches:
    outcomes: List[MatchOutcome]
    n_eligible: int


IouFn = Callable[[Label3D, Label3D], float]


def match_image(
    predictions: Sequence[Tuple[Label3D, float]],
    ground_truth: Sequence[Label3D],
    iou_fn: IouFn,
    iou_threshold: float,
    rule: DifficultyRule,
    image_index: int = 0,
    eligible: Optional[Sequence[bool]] = None,
) -> ImageMatches:
    """greedy matching of one image's detections in descending score

    a detection takes the highest-IoU unmatched eligible GT (ties: lowest
    index). failing that, overlapping an unmatched ineligible GT makes it
    "don't care" (dropped from the ranking); otherwise it is a false positive.

    Args:
        predictions: (label, score) pairs
        ground_truth: GT labels of the image
        iou_fn: overlap function (iou3d or iou_bev)
        iou_threshold: minimum IoU for a match
        rule: difficulty rule deciding GT eligibility
        image_index: position of the image in a pooled evaluation
        eligible: precomputed eligibility per GT (defaults to rule.is_eligible)

    Returns:
        ranked outcomes and the number of eligible GTs
    """
    if eligible is None:
        eligible = [rule.is_eligible(gt) for gt in ground_truth]
    matched = [False] * len(ground_truth)
    ranking = sorted(range(len(predictions)), key=lambda i: -predictions[i][1])
    outcomes: List[MatchOutcome] = []

    for rank, index in enumerate(ranking):
        label, score = predictions[index]
        overlaps = [iou_fn(label, gt) for gt in ground_truth]

        best, best_iou = None, -1.0
        for g, iou in enumerate(overlaps):
            if eligible[g] and not matched[g] and iou >= iou_threshold and iou > best_iou:
                best, best_iou = g, iou
        if best is not None:
            matched[best] = True
            outcomes.append(MatchOutcome(score, True, (image_index, rank)))
            continue

        dont_care = None
        for g, iou in enumerate(overlaps):
            if not eligible[g] and not matched[g] and iou >= iou_threshold:
                dont_care = g
                break
        if dont_care is not None:
            matched[dont_care] = True
            continue

        outcomes.append(MatchOutcome(score, False, (image_index, rank)))

    return ImageMatches(outcomes=outcomes, n_eligible=sum(1 for e in eligible if e))


def ap_from_matches(outcomes: Sequence[MatchOutcome], n_eligible: int) -> float:
    """interpolated AP over recall points 1/40 ... 40/40

    precision at recall r is max{P(k) : R(k) >= r}; the comparison is done in
    integers (tp * 40 >= j * n_eligible) so recall points are hit exactly.
    """
    if n_eligible <= 0:
        return 0.0
    ranked = sorted(outcomes, key=lambda o: (-o.score, o.order))
    if not ranked:
        return 0.0

    tps = np.cumsum([1 if o.is_tp else 0 for o in ranked])
    counts = np.arange(1, len(ranked) + 1)
    precision = tps / counts
    best_after = np.maximum.accumulate(precision[::-1])[::-1]

    total = 0.0
    k = 0
    for j in range(1, RECALL_POINTS + 1):
        while k < len(ranked) and tps[k] * RECALL_POINTS < j * n_eligible:
            k += 1
        if k == len(ranked):
            break
        total += float(best_after[k])
    return total / RECALL_POINTS


def ap_r40(
    predictions: Sequence[Tuple[Label3D, float]],
    ground_truth: Sequence[Label3D],
    iou_fn: IouFn,
    iou_threshold: float,
    rule: DifficultyRule,
) -> float:
    """AP_R40 of one set of detections against one set of GT labels"""
    matches = match_image(predictions, ground_truth, iou_fn, iou_threshold, rule)
    return ap_from_matches(matches.outcomes, matches.n_eligible)


@dataclass(frozen=True)
class EvalRow:
    difficulty: str
    metric: str
    iou_threshold: float
    value: float


METRICS: Dict[str, IouFn] = {"AP3D": iou3d, "APBEV": iou_bev}


def evaluate_dataset(
    images: Sequence[Tuple[Sequence[Label3D], Sequence[Label3D]]],
    iou_threshold: float = 0.7,
    class_name: str = "Car",
) -> List[EvalRow]:
    """pooled AP_R40 over many images for every difficulty and metric

    Args:
        images: (predictions, ground truth) label lists per image;
                predictions carry scores
        iou_threshold: matching threshold
        class_name: evaluated class; its devkit neighbour classes are "don't care"

    Returns:
        one EvalRow per (difficulty, metric)
    """
    neighbors = NEIGHBOR_CLASSES.get(class_name, ())
    rows: List[EvalRow] = []
    for difficulty, rule in DIFFICULTY_RULES.items():
        for metric, iou_fn in METRICS.items():
            outcomes: List[MatchOutcome] = []
            n_eligible = 0
            for image_index, (preds, gts) in enumerate(images):
                dets = [(p, p.score if p.score is not None else 0.0) for p in preds if p.class_name == class_name]
                kept = [g for g in gts if g.class_name == class_name or g.class_name in neighbors]
                eligible = [g.class_name == class_name and rule.is_eligible(g) for g in kept]
                matches = match_image(dets, kept, iou_fn, iou_threshold, rule, image_index, eligible)
                outcomes.extend(matches.outcomes)
                n_eligible += matches.n_eligible
            rows.append(EvalRow(difficulty, metric, iou_threshold, ap_from_matches(outcomes, n_eligible)))
    return rows


def write_eval_csv(rows: Sequence[EvalRow], path: str) -> None:
    """difficulty, metric, iou_threshold, value"""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["difficulty", "metric", "iou_threshold", "value"])
        for row in rows:
            writer.writerow([row.difficulty, row.metric, f"{row.iou_threshold:.2f}", f"{row.value:.6f}"])


# ═══════════════════════════════════════════════════════════════════════════
# selection metrics
# ═══════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class SelectionMetrics:
    precision: float
    recall: float
    count: int


def _item_id(item) -> str:
    return item if isinstance(item, str) else item.prediction_id


def selection_metrics(selected: Sequence, rejected: Sequence, oracle: Mapping[str, bool]) -> SelectionMetrics:
    """precision / recall of a selection against known object truth

    Args:
        selected: selected predictions (anything with prediction_id, or ids)
        rejected: rejected predictions
        oracle: prediction id -> whether it is a real object

    Returns:
        precision (1.0 when nothing is selected), recall (1.0 when there is
        no real object to find) and the selected count
    """
    selected_ids = [_item_id(item) for item in selected]
    all_ids = selected_ids + [_item_id(item) for item in rejected]
    missing = sorted({i for i in all_ids if i not in oracle})
    if missing:
        raise ValidationError(f"oracle has no entry for: {', '.join(missing)}")

    true_selected = sum(1 for i in selected_ids if oracle[i])
    all_true = sum(1 for i in all_ids if oracle[i])
    precision = true_selected / len(selected_ids) if selected_ids else 1.0
    recall = true_selected / all_true if all_true else 1.0
    return SelectionMetrics(precision=precision, recall=recall, count=len(selected_ids))

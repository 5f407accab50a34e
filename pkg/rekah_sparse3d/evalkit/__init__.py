"""rotated overlap, AP_R40 evaluation and selection metrics"""

from rekah_sparse3d.evalkit.evalkit_utils import (
    DIFFICULTY_RULES,
    BevBox,
    DifficultyRule,
    EvalRow,
    MatchOutcome,
    SelectionMetrics,
    ap_from_matches,
    ap_r40,
    bev_box_from_label,
    evaluate_dataset,
    iou3d,
    iou_bev,
    match_image,
    rotated_bev_iou,
    selection_metrics,
    write_eval_csv,
)

__all__ = [
    "DIFFICULTY_RULES",
    "BevBox",
    "DifficultyRule",
    "EvalRow",
    "MatchOutcome",
    "SelectionMetrics",
    "ap_from_matches",
    "ap_r40",
    "bev_box_from_label",
    "evaluate_dataset",
    "iou3d",
    "iou_bev",
    "match_image",
    "rotated_bev_iou",
    "selection_metrics",
    "write_eval_csv",
]

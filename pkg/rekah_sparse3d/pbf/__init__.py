"""prototype bank, depth reliability and pseudo-label selection"""

from rekah_sparse3d.pbf.pbf_utils import (
    SELECTION_MODES,
    BankConfig,
    PbfConfig,
    Prediction,
    PrototypeBank,
    PrototypeSlot,
    RejectReason,
    ScoredPrediction,
    SelectionResult,
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
    score_prediction,
    select_pseudo_labels,
    update_prototype,
    write_scored_jsonl,
)

__all__ = [
    "SELECTION_MODES",
    "BankConfig",
    "PbfConfig",
    "Prediction",
    "PrototypeBank",
    "PrototypeSlot",
    "RejectReason",
    "ScoredPrediction",
    "SelectionResult",
    "confidence_baseline",
    "cosine_similarity",
    "depth_nll",
    "depth_score",
    "gt_bank_insert",
    "initialize_prototypes",
    "load_prototype_bank",
    "proto_score",
    "read_features_jsonl",
    "read_predictions_jsonl",
    "refine_prototypes",
    "save_prototype_bank",
    "score_prediction",
    "select_pseudo_labels",
    "update_prototype",
    "write_scored_jsonl",
]

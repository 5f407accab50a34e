"""KITTI label/calib files, PGM masks, RGBA containers and the GT Bank"""

from rekah_sparse3d.kitti_io.kitti_io_utils import (
    CALIB_SHAPES,
    DONT_CARE,
    GT_BANK_DEDUP_IOU,
    CalibFile,
    EntrySource,
    GrowthRow,
    GtBank,
    GtBankEntry,
    GtBankRecord,
    LabelFile,
    MaskRaster,
    PatchRecord,
    decode_patch,
    encode_patch,
    format_calib_file,
    format_gt_bank,
    format_label_line,
    format_label_text,
    gt_bank_growth,
    gt_bank_size,
    has_box,
    load_gt_bank,
    parse_calib_file,
    parse_label_line,
    parse_label_text,
    read_calib_file,
    read_image,
    read_image_file,
    read_label_file,
    read_mask,
    read_mask_file,
    save_gt_bank,
    seed_gt_bank,
    validate_gt_bank_record,
    write_calib_file,
    write_image,
    write_image_file,
    write_label_file,
    write_mask,
    write_mask_file,
)

__all__ = [
    "CALIB_SHAPES",
    "DONT_CARE",
    "GT_BANK_DEDUP_IOU",
    "CalibFile",
    "EntrySource",
    "GrowthRow",
    "GtBank",
    "GtBankEntry",
    "GtBankRecord",
    "LabelFile",
    "MaskRaster",
    "PatchRecord",
    "decode_patch",
    "encode_patch",
    "format_calib_file",
    "format_gt_bank",
    "format_label_line",
    "format_label_text",
    "gt_bank_growth",
    "gt_bank_size",
    "has_box",
    "load_gt_bank",
    "parse_calib_file",
    "parse_label_line",
    "parse_label_text",
    "read_calib_file",
    "read_image",
    "read_image_file",
    "read_label_file",
    "read_mask",
    "read_mask_file",
    "save_gt_bank",
    "seed_gt_bank",
    "validate_gt_bank_record",
    "write_calib_file",
    "write_image",
    "write_image_file",
    "write_label_file",
    "write_mask",
    "write_mask_file",
]

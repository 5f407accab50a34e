"""KITTI-style file formats

this module contains:
- label lines / label files (devkit 15 or 16 fields)
- calibration files (P0-P3, R0_rect, Tr_* matrices)
- binary PGM masks (P5, maxval 255)
- RGBA containers: object patches ("PATCH1") and scene images ("IMG1")
- the GT Bank (JSON lines, one record per image)

label field order:
  type truncated occluded alpha left top right bottom h w l x y z rotation_y [score]
"""

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from rekah_sparse3d.evalkit.evalkit_utils import iou_bev
from rekah_sparse3d.geometry.geometry_utils import BBox2D, CameraRig, Label3D, RigidTransform, Vec3
from rekah_sparse3d.utils.errors_utils import (
    CalibError,
    FormatError,
    GeometryError,
    GtBankError,
    ParseError,
)

GT_BANK_DEDUP_IOU = 0.5
# devkit class for ignored regions; its dims and location are -1 / -1000 placeholders
DONT_CARE = "DontCare"


# ═══════════════════════════════════════════════════════════════════════════
# labels
# ═══════════════════════════════════════════════════════════════════════════


@dataclass
class LabelFile:
    """labels of one image, in file order"""

    image_id: str
    labels: List[Label3D] = field(default_factory=list)


def _parse_int(token: str) -> int:
    try:
        return int(token)
    except ValueError:
        value = float(token)
        if not value.is_integer():
            raise
        return int(value)


def parse_label_line(line: str, line_number: Optional[int] = None) -> Label3D:
    """parse one devkit label line

    Args:
        line: whitespace-separated fields (15 for ground truth, 16 with score)
        line_number: 1-based position for error messages

    Returns:
        parsed Label3D
    """
    fields = line.split()
    if len(fields) not in (15, 16):
        raise ParseError(f"expected 15 or 16 fields, got {len(fields)}", line_number)

    try:
        numbers = [float(token) for token in fields[3:]]
        occlusion = _parse_int(fields[2])
        truncation = float(fields[1])
    except ValueError as e:
        raise ParseError(f"non-numeric field: {e}", line_number) from None

    if not all(math.isfinite(v) for v in numbers + [truncation]):
        raise ParseError("non-finite numeric field", line_number)

    try:
        return Label3D(
            class_name=fields[0],
            truncation=truncation,
            occlusion=occlusion,
            alpha=numbers[0],
            bbox2d=BBox2D(*numbers[1:5]),
            dims=(numbers[5], numbers[6], numbers[7]),
            location=Vec3(numbers[8], numbers[9], numbers[10]),
            rotation_y=numbers[11],
            score=numbers[12] if len(numbers) == 13 else None,
        )
    except GeometryError as e:
        raise ParseError(str(e), line_number) from None


def _fmt(value: float) -> str:
    text = f"{value:.2f}"
    return "0.00" if text == "-0.00" else text


def format_label_line(label: Label3D) -> str:
    """devkit field order, floats with 2 decimals, score appended when present"""
    parts = [
        label.class_name,
        _fmt(label.truncation),
        str(int(label.occlusion)),
        _fmt(label.alpha),
        *(_fmt(v) for v in label.bbox2d.as_tuple()),
        *(_fmt(v) for v in label.dims),
        _fmt(label.location.x),
        _fmt(label.location.y),
        _fmt(label.location.z),
        _fmt(label.rotation_y),
    ]
    if label.score is not None:
        parts.append(_fmt(label.score))
    return " ".join(parts)


def parse_label_text(text: str) -> List[Label3D]:
    """parse a whole label file body (blank lines skipped)"""
    labels = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            labels.append(parse_label_line(line, line_number))
    return labels


def format_label_text(labels: Iterable[Label3D]) -> str:
    return "".join(format_label_line(label) + "\n" for label in labels)


def read_label_file(path) -> LabelFile:
    """read <image_id>.txt"""
    path = Path(path)
    return LabelFile(image_id=path.stem, labels=parse_label_text(path.read_text(encoding="utf-8")))


def write_label_file(path, labels: Iterable[Label3D]) -> None:
    Path(path).write_text(format_label_text(labels), encoding="utf-8")


# ═══════════════════════════════════════════════════════════════════════════
# calibration
# ═══════════════════════════════════════════════════════════════════════════

CALIB_SHAPES: Dict[str, Tuple[int, int]] = {
    "P0": (3, 4),
    "P1": (3, 4),
    "P2": (3, 4),
    "P3": (3, 4),
    "R0_rect": (3, 3),
    "Tr_velo_to_cam": (3, 4),
    "Tr_imu_to_velo": (3, 4),
    # per-scene world -> camera extrinsic used when moving patches between scenes
    "Tr_extrinsic": (3, 4),
}


@dataclass
class CalibFile:
    """named calibration matrices (P2 always present)"""

    matrices: Dict[str, np.ndarray]

    def __post_init__(self):
        if "P2" not in self.matrices:
            raise CalibError("calibration has no P2 matrix")
        for key, matrix in self.matrices.items():
            if not np.all(np.isfinite(matrix)):
                raise CalibError(f"{key} has non-finite values")

    @property
    def P2(self) -> np.ndarray:
        return self.matrices["P2"]

    @property
    def extrinsic(self) -> RigidTransform:
        if "Tr_extrinsic" in self.matrices:
            return RigidTransform.from_matrix(self.matrices["Tr_extrinsic"])
        return RigidTransform.identity()

    def camera_rig(self, image_size: Tuple[int, int]) -> CameraRig:
        """rig for the left color camera"""
        return CameraRig(P=self.P2, extrinsic=self.extrinsic, image_size=image_size)

    @classmethod
    def from_rig(cls, rig: CameraRig) -> "CalibFile":
        matrices = {"P2": rig.P.copy()}
        if not rig.extrinsic.is_identity():
            matrices["Tr_extrinsic"] = np.hstack([rig.extrinsic.R, rig.extrinsic.T.reshape(3, 1)])
        return cls(matrices)


def parse_calib_file(text: str) -> CalibFile:
    """parse "KEY: v0 v1 ..." lines; unknown keys ignored"""
    matrices: Dict[str, np.ndarray] = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        if ":" not in line:
            continue
        key, values = line.split(":", 1)
        key = key.strip()
        if key not in CALIB_SHAPES:
            continue
        shape = CALIB_SHAPES[key]
        try:
            numbers = [float(token) for token in values.split()]
        except ValueError:
            raise CalibError(f"line {line_number}: {key} has a non-numeric value") from None
        if len(numbers) != shape[0] * shape[1]:
            raise CalibError(
                f"line {line_number}: {key} needs {shape[0] * shape[1]} values, got {len(numbers)}"
            )
        matrices[key] = np.array(numbers, dtype=np.float64).reshape(shape)
    return CalibFile(matrices)


def format_calib_file(calib: CalibFile) -> str:
    """known keys in canonical order, values printed with repr precision"""
    lines = []
    for key in CALIB_SHAPES:
        if key in calib.matrices:
            values = " ".join(repr(float(v)) for v in calib.matrices[key].ravel())
            lines.append(f"{key}: {values}\n")
    return "".join(lines)


def read_calib_file(path) -> CalibFile:
    return parse_calib_file(Path(path).read_text(encoding="utf-8"))


def write_calib_file(path, calib: CalibFile) -> None:
    Path(path).write_text(format_calib_file(calib), encoding="utf-8")


# ═══════════════════════════════════════════════════════════════════════════
# masks (binary PGM)
# ═══════════════════════════════════════════════════════════════════════════


@dataclass(eq=False)
class MaskRaster:
    """binary raster: 0 background, 255 foreground; data is (height, width)"""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.uint8).reshape(self.height, self.width)
        if not np.all((self.data == 0) | (self.data == 255)):
            raise FormatError("mask values must be 0 or 255")

    @classmethod
    def from_array(cls, array) -> "MaskRaster":
        """any nonzero value becomes 255"""
        arr = np.asarray(array)
        data = np.where(arr != 0, 255, 0).astype(np.uint8)
        return cls(width=arr.shape[1], height=arr.shape[0], data=data)

    @property
    def foreground(self) -> np.ndarray:
        return self.data != 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, MaskRaster):
            return NotImplemented
        return self.width == other.width and self.height == other.height and bool(np.array_equal(self.data, other.data))


_PGM_WHITESPACE = b" \t\n\r\x0b\x0c"


def read_mask(data: bytes) -> MaskRaster:
    """decode a binary PGM (P5, maxval 255); nonzero pixels become 255"""
    if not data.startswith(b"P5"):
        raise FormatError("not a binary PGM (magic P5 expected)")

    pos = 2
    header: List[int] = []
    while len(header) < 3:
        if pos >= len(data) or data[pos] not in _PGM_WHITESPACE:
            raise FormatError("malformed PGM header")
        while pos < len(data) and data[pos] in _PGM_WHITESPACE:
            pos += 1
        if pos < len(data) and data[pos] == ord("#"):
            end = data.find(b"\n", pos)
            pos = len(data) if end == -1 else end
            continue
        start = pos
        while pos < len(data) and chr(data[pos]).isdigit():
            pos += 1
        if start == pos:
            raise FormatError("malformed PGM header")
        header.append(int(data[start:pos]))

    width, height, maxval = header
    if maxval != 255:
        raise FormatError(f"PGM maxval must be 255, got {maxval}")
    if pos >= len(data) or data[pos] not in _PGM_WHITESPACE:
        raise FormatError("malformed PGM header")
    pos += 1

    payload = data[pos:pos + width * height]
    if len(payload) < width * height:
        raise FormatError(f"truncated PGM payload: {len(payload)} of {width * height} bytes")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return MaskRaster.from_array(pixels)


def write_mask(mask: MaskRaster) -> bytes:
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    return header + mask.data.tobytes()


def read_mask_file(path) -> MaskRaster:
    return read_mask(Path(path).read_bytes())


def write_mask_file(path, mask: MaskRaster) -> None:
    Path(path).write_bytes(write_mask(mask))


# ═══════════════════════════════════════════════════════════════════════════
# RGBA containers
# ═══════════════════════════════════════════════════════════════════════════

PATCH_MAGIC = b"PATCH1"
IMAGE_MAGIC = b"IMG1"


def _encode_raster(magic: bytes, pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3 or pixels.shape[2] != 4:
        raise FormatError(f"RGBA raster expected, got shape {pixels.shape}")
    height, width = pixels.shape[:2]
    return magic + struct.pack("<II", width, height) + np.ascontiguousarray(pixels).tobytes()


def _decode_raster(magic: bytes, data: bytes) -> Tuple[np.ndarray, bytes]:
    if not data.startswith(magic):
        raise FormatError(f"bad container magic (expected {magic.decode()})")
    offset = len(magic)
    if len(data) < offset + 8:
        raise FormatError("truncated container header")
    width, height = struct.unpack_from("<II", data, offset)
    offset += 8
    size = width * height * 4
    if len(data) < offset + size:
        raise FormatError(f"truncated RGBA payload: {len(data) - offset} of {size} bytes")
    pixels = np.frombuffer(data[offset:offset + size], dtype=np.uint8).reshape(height, width, 4).copy()
    return pixels, data[offset + size:]


def write_image(pixels: np.ndarray) -> bytes:
    """scene image container: IMG1, width, height, row-major RGBA"""
    return _encode_raster(IMAGE_MAGIC, pixels)


def read_image(data: bytes) -> np.ndarray:
    pixels, _ = _decode_raster(IMAGE_MAGIC, data)
    return pixels


def read_image_file(path) -> np.ndarray:
    return read_image(Path(path).read_bytes())


def write_image_file(path, pixels: np.ndarray) -> None:
    Path(path).write_bytes(write_image(pixels))


@dataclass(eq=False)
class PatchRecord:
    """decoded patch container"""

    pixels: np.ndarray
    image_id: str
    label: Label3D
    rig: CameraRig


def encode_patch(pixels: np.ndarray, image_id: str, label: Label3D, rig: CameraRig) -> bytes:
    """PATCH1 container followed by text sections (image id, label line, image size, calib)"""
    text = (
        f"image_id: {image_id}\n"
        f"label: {format_label_line(label)}\n"
        f"image_size: {rig.width} {rig.height}\n"
        + format_calib_file(CalibFile.from_rig(rig))
    )
    return _encode_raster(PATCH_MAGIC, pixels) + text.encode("utf-8")


def decode_patch(data: bytes) -> PatchRecord:
    pixels, trailer = _decode_raster(PATCH_MAGIC, data)
    try:
        text = trailer.decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError("patch text sections are not UTF-8") from None

    sections: Dict[str, str] = {}
    calib_lines = []
    for line in text.splitlines():
        key, _, value = line.partition(":")
        if key in ("image_id", "label", "image_size"):
            sections[key] = value.strip()
        elif line.strip():
            calib_lines.append(line)
    missing = [k for k in ("image_id", "label", "image_size") if k not in sections]
    if missing:
        raise FormatError(f"patch container is missing sections: {', '.join(missing)}")

    size = sections["image_size"].split()
    if len(size) != 2:
        raise FormatError("patch image_size needs width and height")
    calib = parse_calib_file("\n".join(calib_lines))
    rig = calib.camera_rig((int(size[0]), int(size[1])))
    return PatchRecord(pixels=pixels, image_id=sections["image_id"], label=parse_label_line(sections["label"]), rig=rig)


# ═══════════════════════════════════════════════════════════════════════════
# GT Bank
# ═══════════════════════════════════════════════════════════════════════════


class EntrySource(str, Enum):
    SPARSE_GT = "sparse_gt"
    PSEUDO = "pseudo"


@dataclass
class GtBankEntry:
    label: Label3D
    source: EntrySource
    epoch_added: int
    s_depth: Optional[float] = None
    s_proto: Optional[float] = None


@dataclass
class GtBankRecord:
    image_id: str
    entries: List[GtBankEntry] = field(default_factory=list)

    @property
    def labels(self) -> List[Label3D]:
        return [entry.label for entry in self.entries]


GtBank = Dict[str, GtBankRecord]


def _label_to_dict(label: Label3D) -> dict:
    return {
        "class_name": label.class_name,
        "truncation": label.truncation,
        "occlusion": label.occlusion,
        "alpha": label.alpha,
        "bbox2d": list(label.bbox2d.as_tuple()),
        "dims": list(label.dims),
        "location": [label.location.x, label.location.y, label.location.z],
        "rotation_y": label.rotation_y,
        "score": label.score,
    }


def _label_from_dict(data: dict) -> Label3D:
    return Label3D(
        class_name=str(data["class_name"]),
        truncation=float(data["truncation"]),
        occlusion=int(data["occlusion"]),
        alpha=float(data["alpha"]),
        bbox2d=BBox2D(*(float(v) for v in data["bbox2d"])),
        dims=tuple(float(v) for v in data["dims"]),
        location=Vec3(*(float(v) for v in data["location"])),
        rotation_y=float(data["rotation_y"]),
        score=None if data.get("score") is None else float(data["score"]),
    )


def record_to_dict(record: GtBankRecord) -> dict:
    return {
        "image_id": record.image_id,
        "entries": [
            {
                "label": _label_to_dict(entry.label),
                "source": entry.source.value,
                "epoch_added": entry.epoch_added,
                "s_depth": entry.s_depth,
                "s_proto": entry.s_proto,
            }
            for entry in record.entries
        ],
    }


def record_from_dict(data: dict) -> GtBankRecord:
    entries = []
    for item in data["entries"]:
        entries.append(GtBankEntry(
            label=_label_from_dict(item["label"]),
            source=EntrySource(item["source"]),
            epoch_added=int(item["epoch_added"]),
            s_depth=None if item.get("s_depth") is None else float(item["s_depth"]),
            s_proto=None if item.get("s_proto") is None else float(item["s_proto"]),
        ))
    return GtBankRecord(image_id=str(data["image_id"]), entries=entries)


def validate_gt_bank_record(record: GtBankRecord) -> None:
    """sparse_gt entries are epoch 0; pseudo entries never overlap above the dedup IoU"""
    for entry in record.entries:
        if entry.source is EntrySource.SPARSE_GT and entry.epoch_added != 0:
            raise GtBankError(f"{record.image_id}: sparse_gt entry with epoch_added={entry.epoch_added}")
    pseudo = [e.label for e in record.entries if e.source is EntrySource.PSEUDO]
    for i in range(len(pseudo)):
        for j in range(i + 1, len(pseudo)):
            if iou_bev(pseudo[i], pseudo[j]) > GT_BANK_DEDUP_IOU:
                raise GtBankError(f"{record.image_id}: pseudo entries {i} and {j} overlap above {GT_BANK_DEDUP_IOU}")


def load_gt_bank(path) -> GtBank:
    """read gt_bank.jsonl; blank lines ignored"""
    bank: GtBank = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = record_from_dict(json.loads(line))
            except json.JSONDecodeError as e:
                raise GtBankError(f"malformed JSON: {e.msg}", line_number) from None
            except (KeyError, TypeError, ValueError, GeometryError) as e:
                raise GtBankError(f"malformed record: {e}", line_number) from None
            if record.image_id in bank:
                raise GtBankError(f"duplicate image_id {record.image_id}", line_number)
            try:
                validate_gt_bank_record(record)
            except GtBankError as e:
                raise GtBankError(str(e), line_number) from None
            bank[record.image_id] = record
    return bank


def format_gt_bank(bank: Mapping[str, GtBankRecord]) -> str:
    """records sorted by image_id, keys sorted, compact separators"""
    lines = []
    for image_id in sorted(bank):
        lines.append(json.dumps(record_to_dict(bank[image_id]), sort_keys=True, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def save_gt_bank(bank: Mapping[str, GtBankRecord], path) -> None:
    """write atomically: temp file in the target directory, then rename"""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp_name = tempfile.mkstemp(prefix=".gt_bank.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(format_gt_bank(bank))
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def has_box(label: Label3D) -> bool:
    """false for DontCare rows and any label without a positive-size 3D box"""
    return label.class_name != DONT_CARE and min(label.dims) > 0.0


def seed_gt_bank(sparse_by_image: Mapping[str, Sequence[Label3D]]) -> GtBank:
    """epoch-0 bank holding only the sparse ground truths; DontCare rows are left out"""
    return {
        image_id: GtBankRecord(
            image_id=image_id,
            entries=[
                GtBankEntry(label=label, source=EntrySource.SPARSE_GT, epoch_added=0)
                for label in labels
                if has_box(label)
            ],
        )
        for image_id, labels in sparse_by_image.items()
    }


def gt_bank_size(bank: Mapping[str, GtBankRecord]) -> int:
    return sum(len(record.entries) for record in bank.values())


@dataclass(frozen=True)
class GrowthRow:
    epoch: int
    bank_size: int
    sparse_gt: int
    pseudo: int


def gt_bank_growth(bank: Mapping[str, GtBankRecord], last_epoch: Optional[int] = None) -> List[GrowthRow]:
    """bank size after each epoch, reconstructed from epoch_added"""
    entries = [entry for record in bank.values() for entry in record.entries]
    if last_epoch is None:
        last_epoch = max((entry.epoch_added for entry in entries), default=0)
    sparse = sum(1 for e in entries if e.source is EntrySource.SPARSE_GT)
    rows = []
    for epoch in range(last_epoch + 1):
        pseudo = sum(1 for e in entries if e.source is EntrySource.PSEUDO and e.epoch_added <= epoch)
        rows.append(GrowthRow(epoch=epoch, bank_size=sparse + pseudo, sparse_gt=sparse, pseudo=pseudo))
    return rows

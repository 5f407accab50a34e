"""camera and 3D box geometry

this module contains:
- Vec3, BBox2D, RigidTransform, CameraRig, Label3D: value types
- transform_center / apply_horizontal_offset: moving a box center between rigs
- viewing_angle / rotation_from_alpha / alpha_from_rotation: yaw bookkeeping
- box3d_corners / project_box / iou2d: box realization in the image

conventions:
  camera coordinates are x right, y down, z forward (meters).
  angles are wrapped into (-pi, pi]; -pi maps to pi.
  Label3D.location is the center of the bottom face; the box extends -h in y.
  at rotation_y = 0 the box length runs along +z and its width along x.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from rekah_sparse3d.utils.errors_utils import (
    BehindCameraError,
    DegenerateAngleError,
    GeometryError,
    InvalidTransformError,
)

ORTHONORMAL_TOL = 1e-9
MIN_PROJECT_DEPTH = 0.1


# ═══════════════════════════════════════════════════════════════════════════
# value types
# ═══════════════════════════════════════════════════════════════════════════


@dataclass(frozen=True)
class Vec3:
    """point in camera coordinates (meters)"""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise GeometryError(f"non-finite vector: ({self.x}, {self.y}, {self.z})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "Vec3":
        return cls(float(values[0]), float(values[1]), float(values[2]))


@dataclass(frozen=True)
class BBox2D:
    """axis-aligned image box (pixels)"""

    left: float
    top: float
    right: float
    bottom: float

    @property
    def width(self) -> float:
        return max(0.0, self.right - self.left)

    @property
    def height(self) -> float:
        return max(0.0, self.bottom - self.top)

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.left, self.top, self.right, self.bottom)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """extrinsic [R|T]: maps reference coordinates into camera coordinates"""

    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "T", np.asarray(self.T, dtype=np.float64).reshape(3))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix) -> "RigidTransform":
        """build from a 3x4 [R|T] or 4x4 homogeneous matrix"""
        m = np.asarray(matrix, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def validate(self) -> None:
        """raise InvalidTransformError unless R is a proper rotation"""
        if not (np.all(np.isfinite(self.R)) and np.all(np.isfinite(self.T))):
            raise InvalidTransformError("transform has non-finite entries")
        if not np.allclose(self.R.T @ self.R, np.eye(3), rtol=0.0, atol=ORTHONORMAL_TOL):
            raise InvalidTransformError("rotation is not orthonormal")
        if np.linalg.det(self.R) <= 0.0:
            raise InvalidTransformError("rotation has det <= 0")

    def to_homogeneous(self) -> np.ndarray:
        """4x4 lift"""
        h = np.eye(4)
        h[:3, :3] = self.R
        h[:3, 3] = self.T
        return h

    def inverse(self) -> "RigidTransform":
        """[R^T | -R^T T]"""
        return RigidTransform(self.R.T, -self.R.T @ self.T)

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.R, np.eye(3)) and not np.any(self.T))

    def __eq__(self, other) -> bool:
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return bool(np.array_equal(self.R, other.R) and np.array_equal(self.T, other.T))


@dataclass(frozen=True, eq=False)
class CameraRig:
    """intrinsic projection P (3x4), extrinsic transform and image size"""

    P: np.ndarray
    extrinsic: RigidTransform = field(default_factory=RigidTransform.identity)
    image_size: Tuple[int, int] = (1242, 375)

    def __post_init__(self):
        object.__setattr__(self, "P", np.asarray(self.P, dtype=np.float64).reshape(3, 4))
        width, height = self.image_size
        if width <= 0 or height <= 0:
            raise GeometryError(f"image size must be positive, got {self.image_size}")
        object.__setattr__(self, "image_size", (int(width), int(height)))

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]

    def project_points(self, points: np.ndarray) -> np.ndarray:
        """pinhole projection of Nx3 camera points to Nx2 pixels"""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        homo = np.hstack([pts, np.ones((pts.shape[0], 1))]) @ self.P.T
        return homo[:, :2] / homo[:, 2:3]

    def __eq__(self, other) -> bool:
        if not isinstance(other, CameraRig):
            return NotImplemented
        return (
            bool(np.array_equal(self.P, other.P))
            and self.extrinsic == other.extrinsic
            and self.image_size == other.image_size
        )


@dataclass(frozen=True)
class Label3D:
    """one KITTI-style annotated object"""

    class_name: str
    truncation: float
    occlusion: int
    alpha: float
    bbox2d: BBox2D
    dims: Tuple[float, float, float]  # (h, w, l)
    location: Vec3
    rotation_y: float
    score: Optional[float] = None

    @property
    def h(self) -> float:
        return self.dims[0]

    @property
    def w(self) -> float:
        return self.dims[1]

    @property
    def l(self) -> float:
        return self.dims[2]

    def validate(self) -> None:
        """raise GeometryError unless the label meets the Label3D invariants"""
        if min(self.dims) <= 0.0:
            raise GeometryError(f"dimensions must be positive, got {self.dims}")
        if not (self.bbox2d.right > self.bbox2d.left and self.bbox2d.bottom > self.bbox2d.top):
            raise GeometryError(f"degenerate 2D box {self.bbox2d.as_tuple()}")
        for name in ("alpha", "rotation_y"):
            value = getattr(self, name)
            if not (-math.pi < value <= math.pi):
                raise GeometryError(f"{name}={value} is outside (-pi, pi]")


# ═══════════════════════════════════════════════════════════════════════════
# angles
# ═══════════════════════════════════════════════════════════════════════════


def wrap_angle(angle: float) -> float:
    """wrap into (-pi, pi]"""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


def viewing_angle(x: float, z: float) -> float:
    """ray direction theta = arctan2(x, z) of a point (lateral, forward)"""
    if x == 0.0 and z == 0.0:
        raise DegenerateAngleError("viewing angle is undefined at the camera origin")
    theta = math.atan2(x, z)
    return math.pi if theta == -math.pi else theta


def rotation_from_alpha(alpha: float, theta: float) -> float:
    """r_y = wrap(alpha + theta): keeps the observation angle at a new viewpoint"""
    return wrap_angle(alpha + theta)


def alpha_from_rotation(rotation_y: float, theta: float) -> float:
    """alpha = wrap(r_y - theta)"""
    return wrap_angle(rotation_y - theta)


# ═══════════════════════════════════════════════════════════════════════════
# center transforms
# ═══════════════════════════════════════════════════════════════════════════


def transform_center(center: Vec3, src: RigidTransform, tgt: RigidTransform) -> Vec3:
    """move a point from source to target camera coordinates

    computes [R_t|T_t] [R_s|T_s]^-1 on the homogeneous lift of center.
    """
    src.validate()
    tgt.validate()
    relative = tgt.to_homogeneous() @ np.linalg.inv(src.to_homogeneous())
    moved = relative @ np.append(center.as_array(), 1.0)
    return Vec3.from_array(moved[:3])


def apply_horizontal_offset(center: Vec3, x_offset: float) -> Vec3:
    """shift along camera x only"""
    return Vec3(center.x + x_offset, center.y, center.z)


# ═══════════════════════════════════════════════════════════════════════════
# boxes
# ═══════════════════════════════════════════════════════════════════════════


def _yaw_matrix(rotation_y: float) -> np.ndarray:
    c, s = math.cos(rotation_y), math.sin(rotation_y)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def box3d_corners(label: Label3D) -> np.ndarray:
    """8x3 corners in camera coordinates: bottom face first, then top face"""
    h, w, l = label.dims
    if min(h, w, l) <= 0.0:
        raise GeometryError(f"dimensions must be positive, got {label.dims}")
    xs = np.array([w, -w, -w, w, w, -w, -w, w]) / 2.0
    ys = np.array([0.0, 0.0, 0.0, 0.0, -h, -h, -h, -h])
    zs = np.array([l, l, -l, -l, l, l, -l, -l]) / 2.0
    local = np.vstack([xs, ys, zs])
    return (_yaw_matrix(label.rotation_y) @ local).T + label.location.as_array()


def label_footprint(label: Label3D) -> np.ndarray:
    """4x2 bird's-eye (x, z) polygon of the box, counter-clockwise in (x, z)"""
    return box3d_corners(label)[:4][:, [0, 2]]


def _project_envelope(corners: np.ndarray, rig: CameraRig) -> Tuple[float, float, float, float]:
    pts = np.asarray(corners, dtype=np.float64).reshape(-1, 3)
    if np.any(pts[:, 2] <= MIN_PROJECT_DEPTH):
        raise BehindCameraError(f"corner with z <= {MIN_PROJECT_DEPTH} m cannot be projected")
    pixels = rig.project_points(pts)
    if not np.all(np.isfinite(pixels)):
        raise BehindCameraError("projection produced non-finite pixels")
    u_min, v_min = pixels.min(axis=0)
    u_max, v_max = pixels.max(axis=0)
    return float(u_min), float(v_min), float(u_max), float(v_max)


def project_box(corners: np.ndarray, rig: CameraRig) -> BBox2D:
    """axis-aligned envelope of the projected corners, clamped to the image"""
    left, top, right, bottom = _project_envelope(corners, rig)
    return BBox2D(
        left=float(np.clip(left, 0.0, rig.width)),
        top=float(np.clip(top, 0.0, rig.height)),
        right=float(np.clip(right, 0.0, rig.width)),
        bottom=float(np.clip(bottom, 0.0, rig.height)),
    )


def projected_truncation(label: Label3D, rig: CameraRig) -> float:
    """fraction of the unclamped projected box that falls outside the image"""
    left, top, right, bottom = _project_envelope(box3d_corners(label), rig)
    full = BBox2D(left, top, right, bottom).area
    if full <= 0.0:
        return 0.0
    clamped = project_box(box3d_corners(label), rig).area
    return float(min(1.0, max(0.0, 1.0 - clamped / full)))


def with_projected_bbox(label: Label3D, rig: CameraRig) -> Label3D:
    """label with bbox2d recomputed from its 3D box"""
    return replace(label, bbox2d=project_box(box3d_corners(label), rig))


def iou2d(a: BBox2D, b: BBox2D) -> float:
    """intersection over union of axis-aligned boxes"""
    inter_w = min(a.right, b.right) - max(a.left, b.left)
    inter_h = min(a.bottom, b.bottom) - max(a.top, b.top)
    if inter_w <= 0.0 or inter_h <= 0.0:
        return 0.0
    inter = inter_w * inter_h
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return float(min(1.0, inter / union))

"""camera and 3D box geometry shared by augmentation, evaluation and the harness"""

from rekah_sparse3d.geometry.geometry_utils import (
    BBox2D,
    CameraRig,
    Label3D,
    RigidTransform,
    Vec3,
    alpha_from_rotation,
    apply_horizontal_offset,
    box3d_corners,
    iou2d,
    label_footprint,
    project_box,
    projected_truncation,
    rotation_from_alpha,
    transform_center,
    viewing_angle,
    with_projected_bbox,
    wrap_angle,
)

__all__ = [
    "BBox2D",
    "CameraRig",
    "Label3D",
    "RigidTransform",
    "Vec3",
    "alpha_from_rotation",
    "apply_horizontal_offset",
    "box3d_corners",
    "iou2d",
    "label_footprint",
    "project_box",
    "projected_truncation",
    "rotation_from_alpha",
    "transform_center",
    "viewing_angle",
    "with_projected_bbox",
    "wrap_angle",
]

"""exception hierarchy

library code raises these; only the command layer maps them to exit codes:
ValidationError -> 1, ToolIOError -> 2.
"""

from typing import Optional


class Sparse3DError(Exception):
    """base class for all rekah-sparse3d errors"""


class ValidationError(Sparse3DError):
    """invalid value or violated invariant"""


class ToolIOError(Sparse3DError):
    """missing or unreadable input at the command boundary"""


# ═══════════════════════════════════════════════════════════════════════════
# geometry
# ═══════════════════════════════════════════════════════════════════════════


class GeometryError(ValidationError):
    """camera or box geometry cannot be evaluated"""


class InvalidTransformError(GeometryError):
    """rotation is not orthonormal with det +1"""


class DegenerateAngleError(GeometryError):
    """viewing angle requested at the camera origin"""


class BehindCameraError(GeometryError):
    """a point to project lies too close to or behind the camera"""


# ═══════════════════════════════════════════════════════════════════════════
# parsing and formats
# ═══════════════════════════════════════════════════════════════════════════


class ParseError(ValidationError):
    """malformed text record"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class FormatError(ValidationError):
    """malformed binary container (PGM mask, patch, image)"""


class CalibError(ValidationError):
    """calibration file is missing a required matrix or has bad values"""


class GtBankError(ParseError):
    """GT Bank file is malformed or violates its invariants"""


# ═══════════════════════════════════════════════════════════════════════════
# filtering and simulation
# ═══════════════════════════════════════════════════════════════════════════


class EmptyBankError(ValidationError):
    """prototype bank has no slots yet"""


class ZeroFeatureError(ValidationError):
    """cosine similarity is undefined for a zero vector"""


class DomainError(ValidationError):
    """argument outside the mathematical domain of a function"""


class SceneGenerationError(ValidationError):
    """synthetic scene parameters cannot be satisfied"""

"""Rekah Sparse3D - augmentation and pseudo-label filtering for sparsely annotated monocular 3D detection."""

__version__ = "0.3.0"

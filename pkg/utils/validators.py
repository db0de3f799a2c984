"""
Array Validation Utilities

Shape and value checks shared by every numeric module:
- finiteness checks that raise NumericError
- shape agreement checks that raise StructuralError
- pixel range checks for images

Author: TrajGuard Development Team
"""

import numpy as np

from utils.errors import DataError, NumericError, StructuralError


def ensure_finite(array, what="value"):
    """
    Raise NumericError if any entry is NaN or infinite.

    Args:
        array: Scalar or array to check
        what: Name used in the error message

    Returns:
        The input, unchanged
    """
    if not np.all(np.isfinite(array)):
        raise NumericError(f"{what} contains non-finite entries")
    return array


def ensure_same_shape(a, b, what="tensors"):
    """
    Raise StructuralError unless both arrays share a shape.

    Args:
        a: First array
        b: Second array
        what: Name used in the error message
    """
    if np.shape(a) != np.shape(b):
        raise StructuralError(f"{what}: shape {np.shape(a)} does not match {np.shape(b)}")


def ensure_shape(array, shape, what="tensor"):
    """Raise StructuralError unless array.shape equals shape."""
    if tuple(np.shape(array)) != tuple(shape):
        raise StructuralError(f"{what}: expected shape {tuple(shape)}, got {tuple(np.shape(array))}")


def ensure_pixel_range(image, what="image", atol=1e-6):
    """
    Raise DataError if pixels leave [0, 1].

    Args:
        image: Pixel array
        what: Name used in the error message
        atol: Tolerance on both ends of the range
    """
    ensure_finite(image, what)
    if image.size and (image.min() < -atol or image.max() > 1.0 + atol):
        raise DataError(f"{what} has pixels outside [0, 1]")


def ensure_class_id(label, num_classes, what="class id"):
    """Raise DataError unless 0 <= label < num_classes."""
    if not 0 <= int(label) < num_classes:
        raise DataError(f"{what} {label} outside [0, {num_classes})")
    return int(label)

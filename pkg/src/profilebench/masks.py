"""Binary-mask helpers: morphological-gradient boundary, exact EDT, shifting."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

# 3x3 cross (4-connected) structuring element for the morphological gradient
CROSS = ndimage.generate_binary_structure(2, 1)


def as_mask(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {a.shape}")
    return a.astype(bool)


def boundary(mask) -> np.ndarray:
    """Mask pixels with a 4-neighbour outside the mask.

    Pixels beyond the frame count as inside, so where a silhouette is cut by the
    image border the border itself is not a contour.
    """
    m = as_mask(mask)
    return m & ~ndimage.binary_erosion(m, structure=CROSS, border_value=1)


def distance_to(mask) -> np.ndarray:
    """Exact Euclidean distance from every pixel to the nearest True pixel of `mask`.

    Returns +inf everywhere when `mask` is empty.
    """
    m = as_mask(mask)
    if not m.any():
        return np.full(m.shape, np.inf)
    return ndimage.distance_transform_edt(~m)


def shift(mask, dx: int, dy: int) -> np.ndarray:
    """Translate by (dx, dy) pixels (x right, y down); content leaving the frame is dropped."""
    m = as_mask(mask)
    out = np.zeros_like(m)
    h, w = m.shape
    dx, dy = int(dx), int(dy)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    src = m[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
    out[max(0, dy):max(0, dy) + src.shape[0], max(0, dx):max(0, dx) + src.shape[1]] = src
    return out


def mask_points(mask) -> np.ndarray:
    """(row, col) coordinates of True pixels as float (n, 2)."""
    return np.argwhere(as_mask(mask)).astype(np.float64)

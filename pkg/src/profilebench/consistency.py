"""Geometry-appearance consistency: do strong image edges sit on the silhouette boundary?

For a matched (image, silhouette) pair the strong Sobel edges near the mask
boundary should hug it; the same image scored against a translated copy of the
silhouette gives the negative control.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from . import defaults
from .masks import as_mask, boundary, distance_to, shift

# luma weights (ITU-R BT.601) for RGB -> gray
LUMA = np.array([0.299, 0.587, 0.114])
# largest Sobel magnitude reachable on an image in [0, 1]: |gx| = |gy| = 4
SOBEL_MAX = 4.0 * math.sqrt(2.0)


class ConsistencyError(ValueError):
    pass


@dataclass(frozen=True)
class ConsistencyConfig:
    band_width_px: float = defaults.BAND_WIDTH_PX
    sobel_threshold: float = defaults.SOBEL_THRESHOLD
    coverage_radius_px: float = defaults.COVERAGE_RADIUS_PX
    control_shift: tuple = defaults.CONTROL_SHIFT
    resolution: int | None = None  # working size (square); None keeps the RGB size

    def __post_init__(self):
        if not self.band_width_px > 0:
            raise ValueError("band_width_px must be > 0")
        if not 0 < self.sobel_threshold < 1:
            raise ValueError("sobel_threshold must lie in (0, 1)")
        if not self.coverage_radius_px > 0:
            raise ValueError("coverage_radius_px must be > 0")
        if len(self.control_shift) != 2:
            raise ValueError("control_shift must be (dx, dy)")
        if self.resolution is not None and self.resolution < 1:
            raise ValueError("resolution must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["control_shift"] = list(self.control_shift)
        return d


@dataclass
class EdgeAgreement:
    mean_dist_px: float
    sym_chamfer_px: float
    coverage: float
    n_boundary: int
    n_edges: int
    reason: str | None = None  # "no_edges_in_band" when the edge set is empty

    @property
    def valid(self) -> bool:
        return self.reason is None


@dataclass
class ConsistencyReport:
    matched: EdgeAgreement
    shifted: EdgeAgreement
    resolution: tuple  # (height, width) distances are measured in
    config: ConsistencyConfig

    def to_dict(self) -> dict:
        return {"matched": asdict(self.matched), "shifted": asdict(self.shifted),
                "resolution": list(self.resolution), "config": self.config.to_dict()}

    def row(self) -> dict:
        """Flat columns for CSV output."""
        out = {}
        for name, e in (("matched", self.matched), ("shifted", self.shifted)):
            for k, v in asdict(e).items():
                out[f"{name}_{k}"] = v
        return out


def to_gray(image) -> np.ndarray:
    """Float gray image in [0, 1]; uint8 input is scaled by 1/255, RGB(A) mixed by luma."""
    img = np.asarray(image)
    scale = 255.0 if img.dtype == np.uint8 else 1.0
    img = img.astype(np.float64) / scale
    if img.ndim == 3:
        img = img[..., :3] @ LUMA if img.shape[2] >= 3 else img[..., 0]
    if img.ndim != 2:
        raise ConsistencyError(f"unsupported image shape {np.shape(image)}")
    return img


def resize_nearest(a, shape) -> np.ndarray:
    """Nearest-neighbour resize sampling the source at output pixel centres."""
    a = np.asarray(a)
    h, w = a.shape[:2]
    rows = np.minimum(((np.arange(shape[0]) + 0.5) * h / shape[0]).astype(np.int64), h - 1)
    cols = np.minimum(((np.arange(shape[1]) + 0.5) * w / shape[1]).astype(np.int64), w - 1)
    return a[rows][:, cols]


def _resize_gray(gray: np.ndarray, size: int) -> np.ndarray:
    if gray.shape == (size, size):
        return gray
    zoom = (size / gray.shape[0], size / gray.shape[1])
    return np.clip(ndimage.zoom(gray, zoom, order=1, mode="nearest", grid_mode=True), 0.0, 1.0)


def sobel_magnitude(gray) -> np.ndarray:
    """Sobel gradient magnitude with replicate padding, scaled to [0, 1]."""
    g = np.asarray(gray, dtype=np.float64)
    gx = ndimage.sobel(g, axis=1, mode="nearest")
    gy = ndimage.sobel(g, axis=0, mode="nearest")
    return np.hypot(gx, gy) / SOBEL_MAX


def sobel_edges(gray, threshold: float = defaults.SOBEL_THRESHOLD) -> np.ndarray:
    return sobel_magnitude(gray) > threshold


def boundary_band(mask, width: float) -> np.ndarray:
    """Pixels within Euclidean distance `width` of the mask boundary."""
    b = boundary(mask)
    if not b.any():
        raise ConsistencyError("silhouette has no boundary pixels")
    return distance_to(b) <= width


def edge_agreement(bnd: np.ndarray, edges: np.ndarray, radius: float) -> EdgeAgreement:
    """Boundary-to-edge distance, symmetric chamfer and coverage within `radius`."""
    nb, ne = int(bnd.sum()), int(edges.sum())
    if ne == 0:
        return EdgeAgreement(math.inf, math.inf, 0.0, nb, 0, "no_edges_in_band")
    d_be = distance_to(edges)[bnd]
    d_eb = distance_to(bnd)[edges]
    mean = float(d_be.mean())
    return EdgeAgreement(mean, 0.5 * (mean + float(d_eb.mean())),
                         float(np.mean(d_be <= radius)), nb, ne)


def _score(edges_all, silhouette, cfg) -> EdgeAgreement:
    bnd = boundary(silhouette)
    if not bnd.any():
        return EdgeAgreement(math.inf, math.inf, 0.0, 0, 0, "empty_boundary")
    band = distance_to(bnd) <= cfg.band_width_px
    return edge_agreement(bnd, edges_all & band, cfg.coverage_radius_px)


def consistency_check(rgb, silhouette, config: ConsistencyConfig = ConsistencyConfig()) -> ConsistencyReport:
    """Score an image against its silhouette and against the shifted control.

    The silhouette is resized (nearest) to the working resolution, its boundary
    and band are extracted, and strong Sobel edges inside the band are compared
    with the boundary. The control repeats this for the silhouette translated by
    `config.control_shift`; content pushed out of frame is dropped.
    """
    gray = to_gray(rgb)
    if config.resolution is not None:
        gray = _resize_gray(gray, config.resolution)
    sil = as_mask(silhouette)
    if not sil.any():
        raise ConsistencyError("silhouette is empty")
    sil = resize_nearest(sil, gray.shape)
    if not boundary(sil).any():
        raise ConsistencyError("silhouette has no boundary pixels at the working resolution")
    edges = sobel_edges(gray, config.sobel_threshold)
    dx, dy = config.control_shift
    return ConsistencyReport(
        matched=_score(edges, sil, config),
        shifted=_score(edges, shift(sil, dx, dy), config),
        resolution=tuple(gray.shape),
        config=config,
    )

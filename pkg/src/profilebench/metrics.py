"""Evaluation metrics: alignment, vertex errors, silhouette IoU / boundary chamfer,
scan-to-mesh distance and the clinical contour proxy."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import defaults
from .masks import as_mask, boundary, distance_to
from .model import Mesh
from .raster import VisibilityMask


class AlignmentError(ValueError):
    pass


class BoundaryError(ValueError):
    """A mask has no boundary pixels, so a boundary metric is undefined."""


class ProxySkipped(Exception):
    """Sample excluded from the clinical proxy; `reason` is a stable code."""

    REASONS = ("invalid_mask", "missing_prediction", "invalid_bbox", "roi_too_small")

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or abs(np.linalg.det(r) - 1) > 1e-9:
            raise ValueError("rotation must be orthonormal with det +1")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "scale", float(self.scale))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3), 1.0)

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return self.scale * p @ self.rotation.T + self.translation

    def apply_mesh(self, mesh: Mesh) -> Mesh:
        return Mesh(self.apply(mesh.vertices), mesh.faces)

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist(),
                "scale": self.scale}


def umeyama_align(src, dst, subset=None, with_scale: bool = False) -> RigidTransform:
    """Least-squares (similarity) transform minimising sum |s R src_i + t - dst_i|^2 over `subset`."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise AlignmentError(f"src/dst must both be (M, 3), got {src.shape} and {dst.shape}")
    if subset is not None:
        subset = np.asarray(subset)
        src, dst = src[subset], dst[subset]
    m = len(src)
    if m < 3:
        raise AlignmentError(f"need at least 3 correspondences, got {m}")
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    xs, xd = src - mu_s, dst - mu_d
    spread = np.linalg.svd(xs, compute_uv=False)
    if spread[0] == 0 or spread[1] <= 1e-10 * spread[0]:
        raise AlignmentError("degenerate correspondence set (collinear or coincident points)")
    if np.array_equal(src, dst):
        # the optimum is the identity; skip the SVD so it comes back exact
        return RigidTransform.identity()
    cov = xd.T @ xs / m
    u, d, vt = np.linalg.svd(cov)
    if d[0] == 0 or d[1] <= 1e-12 * d[0]:
        raise AlignmentError("rank-deficient cross-covariance")
    sign = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[2] = -1.0
    rot = (u * sign) @ vt
    scale = 1.0
    if with_scale:
        scale = float((d * sign).sum() / ((xs ** 2).sum() / m))
    trans = mu_d - scale * rot @ mu_s
    return RigidTransform(rot, trans, scale)


def alignment_objective(transform: RigidTransform, src, dst, subset=None) -> float:
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if subset is not None:
        src, dst = src[subset], dst[subset]
    return float(np.sum((transform.apply(src) - dst) ** 2))


@dataclass
class MetricsReport:
    e_all: float | None = None
    e_vis: float | None = None
    e_jaw: float | None = None
    e_jaw_vis: float | None = None
    iou: float | None = None
    boundary_chamfer: float | None = None
    n_all: int = 0
    n_vis: int = 0
    n_jaw: int = 0
    n_jaw_vis: int = 0
    n_sil_gt: int = 0
    n_sil_pred: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_or_none(values: np.ndarray) -> float | None:
    return float(values.mean()) if len(values) else None


def vertex_errors(pred: Mesh, gt: Mesh, transform: RigidTransform | None,
                  visibility: VisibilityMask | np.ndarray, jawline) -> MetricsReport:
    """Mean Euclidean vertex distances over all / visible / jawline / visible jawline vertices.

    Empty vertex sets give ``None`` (never 0) with the count recorded.
    """
    pv = np.asarray(pred.vertices, dtype=np.float64)
    gv = np.asarray(gt.vertices, dtype=np.float64)
    if pv.shape != gv.shape:
        raise ValueError(f"topology mismatch: {pv.shape} vs {gv.shape}")
    if transform is not None:
        pv = transform.apply(pv)
    dist = np.linalg.norm(pv - gv, axis=1)
    vis = visibility.visible if isinstance(visibility, VisibilityMask) else np.asarray(visibility, bool)
    jaw = np.asarray(jawline, dtype=np.int64)
    jaw_vis = jaw[vis[jaw]]
    return MetricsReport(
        e_all=_mean_or_none(dist), e_vis=_mean_or_none(dist[vis]),
        e_jaw=_mean_or_none(dist[jaw]), e_jaw_vis=_mean_or_none(dist[jaw_vis]),
        n_all=len(dist), n_vis=int(vis.sum()), n_jaw=len(jaw), n_jaw_vis=len(jaw_vis),
    )


def silhouette_iou(a, b) -> float:
    a, b = as_mask(a), as_mask(b)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def boundary_chamfer(a, b, normalize: bool = True) -> float:
    """Symmetric mean nearest-boundary distance, divided by the image diagonal."""
    a, b = as_mask(a), as_mask(b)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    ba, bb = boundary(a), boundary(b)
    if not ba.any() or not bb.any():
        raise BoundaryError("boundary chamfer undefined: empty boundary")
    d_ab = distance_to(bb)[ba].mean()
    d_ba = distance_to(ba)[bb].mean()
    value = 0.5 * (d_ab + d_ba)
    if normalize:
        h, w = a.shape
        value /= np.hypot(w, h)
    return float(value)


# -- scan to mesh --------------------------------------------------------------

def closest_point_on_triangles(p, a, b, c) -> np.ndarray:
    """Closest points on triangles (a, b, c) to points p, all (M, 3), by Voronoi-region tests."""
    ab, ac = b - a, c - a
    ap, bp, cp = p - a, p - b, p - c
    dot = lambda x, y: np.einsum("ij,ij->i", x, y)  # noqa: E731
    d1, d2 = dot(ab, ap), dot(ac, ap)
    d3, d4 = dot(ab, bp), dot(ac, bp)
    d5, d6 = dot(ab, cp), dot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        out = a + ab * v[:, None] + ac * w[:, None]
        # edge bc
        e = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        out = np.where(m[:, None], b + (c - b) * e[:, None], out)
        # edge ac
        e = d2 / (d2 - d6)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(m[:, None], a + ac * e[:, None], out)
        # vertex c
        m = (d6 >= 0) & (d5 <= d6)
        out = np.where(m[:, None], c, out)
        # edge ab
        e = d1 / (d1 - d3)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(m[:, None], a + ab * e[:, None], out)
        # vertex b
        m = (d3 >= 0) & (d4 <= d3)
        out = np.where(m[:, None], b, out)
        # vertex a
        m = (d1 <= 0) & (d2 <= 0)
        out = np.where(m[:, None], a, out)
    bad = ~np.all(np.isfinite(out), axis=1)
    if bad.any():
        out[bad] = _closest_on_edges(p[bad], a[bad], b[bad], c[bad])
    return out


def _closest_on_edges(p, a, b, c):
    best, best_d = None, None
    for s, t in ((a, b), (b, c), (c, a)):
        d = t - s
        ll = np.einsum("ij,ij->i", d, d)
        u = np.where(ll > 0, np.einsum("ij,ij->i", p - s, d) / np.where(ll > 0, ll, 1), 0.0)
        q = s + d * np.clip(u, 0, 1)[:, None]
        dist = np.linalg.norm(p - q, axis=1)
        if best is None:
            best, best_d = q, dist
        else:
            take = dist < best_d
            best = np.where(take[:, None], q, best)
            best_d = np.minimum(dist, best_d)
    return best


def point_triangle_distance(p, a, b, c) -> np.ndarray:
    return np.linalg.norm(p - closest_point_on_triangles(p, a, b, c), axis=1)


def point_mesh_distance(points, vertices, faces, k: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Exact distance from each point to the nearest triangle, with its face id.

    Candidate triangles come from a k-d tree over centroids; any triangle whose
    centroid lies within (current upper bound + largest circumradius) is tested,
    so the result equals an exhaustive search.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = np.asarray(vertices, dtype=np.float64)[np.asarray(faces)]
    cent = tri.mean(axis=1)
    reach = np.linalg.norm(tri - cent[:, None], axis=2).max()
    tree = cKDTree(cent)
    k = min(k, len(tri))
    _, near = tree.query(pts, k=k)
    near = near.reshape(len(pts), k)
    rep = np.repeat(np.arange(len(pts)), k)
    flat = near.ravel()
    d0 = point_triangle_distance(pts[rep], tri[flat, 0], tri[flat, 1], tri[flat, 2]).reshape(-1, k)
    upper = d0.min(axis=1)
    cands = tree.query_ball_point(pts, upper + reach + 1e-12)
    lens = np.fromiter((len(c) for c in cands), dtype=np.int64, count=len(pts))
    pid = np.repeat(np.arange(len(pts)), lens)
    fid = np.fromiter((f for c in cands for f in c), dtype=np.int64, count=int(lens.sum()))
    d = point_triangle_distance(pts[pid], tri[fid, 0], tri[fid, 1], tri[fid, 2])
    order = np.lexsort((fid, d, pid))
    first = np.searchsorted(pid[order], np.arange(len(pts)))
    best = order[first]
    return d[best], fid[best]


@dataclass(frozen=True, eq=False)
class ScanResult:
    distances: np.ndarray
    median: float
    mean: float
    transform: RigidTransform


def scan_to_mesh(scan_points, mesh: Mesh, landmarks_pred, landmarks_gt,
                 with_scale: bool = False) -> ScanResult:
    """Align the mesh to the scan with the landmark pairs, then measure scan-to-mesh distances."""
    scan = np.asarray(scan_points, dtype=np.float64).reshape(-1, 3)
    if len(scan) == 0:
        raise ValueError("empty scan")
    lp = np.asarray(landmarks_pred, dtype=np.float64)
    lg = np.asarray(landmarks_gt, dtype=np.float64)
    if lp.shape != lg.shape or len(lp) < 3:
        raise AlignmentError("need matching landmark sets with >= 3 points")
    tf = umeyama_align(lp, lg, with_scale=with_scale)
    dist, _ = point_mesh_distance(scan, tf.apply(mesh.vertices), mesh.faces)
    return ScanResult(dist, float(np.median(dist)), float(dist.mean()), tf)


# -- clinical contour proxy ----------------------------------------------------

def _bbox(mask: np.ndarray):
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if len(rows) == 0:
        return None
    return rows[0], cols[0], rows[-1], cols[-1]


def upper_profile_box(mask, upper_fraction: float):
    """Bounding box (r0, c0, r1, c1) of the mask pixels in the top `upper_fraction` of its height."""
    m = as_mask(mask)
    box = _bbox(m)
    if box is None:
        return None
    r0, _, r1, _ = box
    cut = r0 + int(np.floor(upper_fraction * (r1 - r0 + 1)))
    part = np.zeros_like(m)
    part[r0:max(cut, r0 + 1)] = m[r0:max(cut, r0 + 1)]
    return _bbox(part)


def bbox_similarity(pred_mask, ref_mask, upper_fraction: float):
    """Isotropic scale and translation taking pred's upper-profile box onto ref's.

    Returns (scale, offset) with ref_coord = scale * pred_coord + offset, coords (row, col).
    """
    bp = upper_profile_box(pred_mask, upper_fraction)
    br = upper_profile_box(ref_mask, upper_fraction)
    if bp is None or br is None:
        raise ProxySkipped("invalid_bbox", "empty upper-profile box")
    hp, wp = bp[2] - bp[0] + 1, bp[3] - bp[1] + 1
    hr, wr = br[2] - br[0] + 1, br[3] - br[1] + 1
    if min(hp, wp, hr, wr) < 2:
        raise ProxySkipped("invalid_bbox", "degenerate upper-profile box")
    scale = float(np.sqrt((hr * wr) / (hp * wp)))
    cp = np.array([(bp[0] + bp[2]) / 2.0, (bp[1] + bp[3]) / 2.0])
    cr = np.array([(br[0] + br[2]) / 2.0, (br[1] + br[3]) / 2.0])
    return scale, cr - scale * cp


def warp_mask(mask, scale: float, offset, out_shape) -> np.ndarray:
    """Nearest-neighbour warp: out[q] = mask[(q - offset) / scale]."""
    m = as_mask(mask)
    rr, cc = np.indices(out_shape, dtype=np.float64)
    sr = np.rint((rr - offset[0]) / scale).astype(np.int64)
    sc = np.rint((cc - offset[1]) / scale).astype(np.int64)
    ok = (sr >= 0) & (sr < m.shape[0]) & (sc >= 0) & (sc < m.shape[1])
    out = np.zeros(out_shape, dtype=bool)
    out[ok] = m[sr[ok], sc[ok]]
    return out


@dataclass(frozen=True)
class ContourProxyConfig:
    # ROI as (x0, y0, x1, y1) fractions of the clinical mask's bounding box;
    # x grows towards the face for a right-facing (canonical) profile
    roi: tuple = (0.5, defaults.CLINICAL_ROI_START, 1.0, 1.0)
    upper_fraction: float = defaults.CLINICAL_ROI_START
    align: bool = True
    facing: str = "right"
    min_boundary_px: int = 20


def clinical_contour_proxy(pred_silhouette, clinical_mask,
                           config: ContourProxyConfig = ContourProxyConfig()) -> float:
    """Mean distance (px) from the clinical contour inside the anterior jawline ROI
    to the bbox-aligned predicted contour."""
    clin = as_mask(clinical_mask)
    pred = as_mask(pred_silhouette)
    if not clin.any():
        raise ProxySkipped("invalid_mask", "empty clinical mask")
    if not pred.any():
        raise ProxySkipped("missing_prediction", "empty predicted silhouette")
    if config.align:
        scale, offset = bbox_similarity(pred, clin, config.upper_fraction)
        pred = warp_mask(pred, scale, offset, clin.shape)
    elif pred.shape != clin.shape:
        raise ValueError("unaligned masks must share a shape")
    r0, c0, r1, c1 = _bbox(clin)
    x0, y0, x1, y1 = config.roi
    if config.facing == "left":
        x0, x1 = 1.0 - x1, 1.0 - x0
    h, w = r1 - r0 + 1, c1 - c0 + 1
    rs, re = r0 + int(np.floor(y0 * h)), r0 + int(np.ceil(y1 * h))
    cs, ce = c0 + int(np.floor(x0 * w)), c0 + int(np.ceil(x1 * w))
    roi = np.zeros_like(clin)
    roi[rs:re, cs:ce] = True
    clin_b = boundary(clin) & roi
    if np.count_nonzero(clin_b) < config.min_boundary_px:
        raise ProxySkipped("roi_too_small",
                           f"{np.count_nonzero(clin_b)} boundary px < {config.min_boundary_px}")
    pred_b = boundary(pred)
    if not pred_b.any():
        raise ProxySkipped("missing_prediction", "aligned prediction left the frame")
    return float(distance_to(pred_b)[clin_b].mean())

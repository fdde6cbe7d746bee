"""Fixed perspective camera and a z-buffer triangle rasterizer.

Conventions: the camera sits at ``(0, 0, distance)`` looking at the origin,
``+y`` up, ``+x`` to the right of the image; the field of view is vertical.
Camera-space depth is ``distance - z``. Pixel ``(row i, column j)`` has its
center at image coordinates ``(u, v) = (j, i)``, so the principal point is
``((W - 1) / 2, (H - 1) / 2)``.

Rasterization samples pixel centers with no back-face culling. A covered
pixel keeps the triangle with the strictly smallest depth; ties go to the
lower face index. Triangles with any vertex at depth <= ``near`` are
discarded whole (no clipping), and samples beyond ``far`` are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import defaults
from .model import Mesh, vertex_normals


@dataclass(frozen=True)
class Camera:
    distance: float = defaults.CAMERA_DISTANCE
    fov_deg: float = defaults.CAMERA_FOV_DEG
    width: int = defaults.RENDER_RESOLUTION
    height: int = defaults.RENDER_RESOLUTION
    near: float = 0.05
    far: float = 10.0

    def __post_init__(self):
        if not self.distance > self.near > 0:
            raise ValueError("camera needs distance > near > 0")
        if not self.far > self.distance:
            raise ValueError("camera needs far > distance")
        if not 0 < self.fov_deg < 180:
            raise ValueError("fov_deg must be in (0, 180)")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")

    @property
    def focal(self) -> float:
        """Focal length in pixels (vertical field of view)."""
        return (self.height / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)

    @property
    def principal_point(self) -> tuple[float, float]:
        return (self.width - 1) / 2.0, (self.height - 1) / 2.0

    def at_resolution(self, size: int) -> "Camera":
        return replace(self, width=int(size), height=int(size))

    def to_dict(self) -> dict:
        return {"distance": self.distance, "fov_deg": self.fov_deg, "fov_axis": defaults.FOV_AXIS,
                "width": self.width, "height": self.height, "near": self.near, "far": self.far,
                "position": [0.0, 0.0, self.distance], "look_at": [0.0, 0.0, 0.0], "up": [0.0, 1.0, 0.0]}

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        keys = ("distance", "fov_deg", "width", "height", "near", "far")
        return cls(**{k: d[k] for k in keys if k in d})


@dataclass(frozen=True, eq=False)
class RasterBuffers:
    depth: np.ndarray  # (H, W), +inf where empty
    face_id: np.ndarray  # (H, W), -1 where empty
    bary: np.ndarray  # (H, W, 3), perspective-correct

    @property
    def silhouette(self) -> np.ndarray:
        return self.face_id >= 0


@dataclass(frozen=True, eq=False)
class VisibilityMask:
    visible: np.ndarray  # (N,) bool
    resolution: int
    visible_faces: np.ndarray  # face ids owning >= 1 pixel

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.visible)


def project(camera: Camera, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pinhole projection; returns (pixels (M, 2) as (u, v), depth (M,), valid (M,))."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    depth = camera.distance - pts[:, 2]
    valid = depth > camera.near
    safe = np.where(valid, depth, 1.0)
    f = camera.focal
    cx, cy = camera.principal_point
    u = cx + f * pts[:, 0] / safe
    v = cy - f * pts[:, 1] / safe
    pix = np.stack([u, v], axis=1)
    pix[~valid] = np.nan
    return pix, depth, valid


def unproject(camera: Camera, pixels, depth) -> np.ndarray:
    pix = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    depth = np.asarray(depth, dtype=np.float64).reshape(-1)
    f = camera.focal
    cx, cy = camera.principal_point
    x = (pix[:, 0] - cx) * depth / f
    y = -(pix[:, 1] - cy) * depth / f
    return np.stack([x, y, camera.distance - depth], axis=1)


def rasterize(camera: Camera, mesh: Mesh) -> RasterBuffers:
    h, w = camera.height, camera.width
    depth = np.full((h, w), np.inf)
    face_id = np.full((h, w), -1, dtype=np.int64)
    bary = np.zeros((h, w, 3))
    faces = np.asarray(mesh.faces)
    if len(faces) == 0:
        return RasterBuffers(depth, face_id, bary)
    pix, z, valid = project(camera, mesh.vertices)
    tri_ok = valid[faces].all(axis=1)
    for fi in np.flatnonzero(tri_ok):
        i0, i1, i2 = faces[fi]
        (x0, y0), (x1, y1), (x2, y2) = pix[i0], pix[i1], pix[i2]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0 or not np.isfinite(area):
            continue
        xmin = max(math.ceil(min(x0, x1, x2)), 0)
        xmax = min(math.floor(max(x0, x1, x2)), w - 1)
        ymin = max(math.ceil(min(y0, y1, y2)), 0)
        ymax = min(math.floor(max(y0, y1, y2)), h - 1)
        if xmin > xmax or ymin > ymax:
            continue
        xs = np.arange(xmin, xmax + 1, dtype=np.float64)[None, :]
        ys = np.arange(ymin, ymax + 1, dtype=np.float64)[:, None]
        l0 = ((x1 - xs) * (y2 - ys) - (y1 - ys) * (x2 - xs)) / area
        l1 = ((x2 - xs) * (y0 - ys) - (y2 - ys) * (x0 - xs)) / area
        l2 = ((x0 - xs) * (y1 - ys) - (y0 - ys) * (x1 - xs)) / area
        inside = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
        if not inside.any():
            continue
        z0, z1, z2 = z[i0], z[i1], z[i2]
        inv = l0 / z0 + l1 / z1 + l2 / z2
        with np.errstate(divide="ignore", invalid="ignore"):
            zz = 1.0 / inv
        win = inside & (zz < depth[ymin:ymax + 1, xmin:xmax + 1]) & (zz <= camera.far)
        if not win.any():
            continue
        rows, cols = np.nonzero(win)
        rows_i, cols_i = rows + ymin, cols + xmin
        zw = zz[rows, cols]
        depth[rows_i, cols_i] = zw
        face_id[rows_i, cols_i] = fi
        bary[rows_i, cols_i, 0] = l0[rows, cols] / z0 * zw
        bary[rows_i, cols_i, 1] = l1[rows, cols] / z1 * zw
        bary[rows_i, cols_i, 2] = l2[rows, cols] / z2 * zw
    return RasterBuffers(depth, face_id, bary)


def render_normals(camera: Camera, mesh: Mesh, buffers: RasterBuffers) -> np.ndarray:
    """Per-pixel unit normals in camera space (x right, y up, z towards the camera)."""
    vn = vertex_normals(mesh.vertices, mesh.faces)
    out = np.zeros(buffers.depth.shape + (3,))
    cov = buffers.face_id >= 0
    if not cov.any():
        return out
    corners = vn[mesh.faces[buffers.face_id[cov]]]  # (P, 3, 3)
    n = np.einsum("pc,pcd->pd", buffers.bary[cov], corners)
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    out[cov] = np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)
    return out


def vertex_visibility(camera: Camera, mesh: Mesh,
                      resolution: int = defaults.VISIBILITY_RESOLUTION) -> VisibilityMask:
    """A vertex is visible iff it belongs to a triangle owning >= 1 pixel."""
    buf = rasterize(camera.at_resolution(resolution), mesh)
    faces_vis = np.unique(buf.face_id[buf.face_id >= 0])
    visible = np.zeros(len(mesh.vertices), dtype=bool)
    visible[np.asarray(mesh.faces)[faces_vis].ravel()] = True
    return VisibilityMask(visible, int(resolution), faces_vis)


def project_landmarks(camera: Camera, points) -> np.ndarray:
    pix, _, _ = project(camera, points)
    return pix

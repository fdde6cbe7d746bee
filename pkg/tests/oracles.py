"""Slow, independent reference implementations used only by the tests.

Each oracle avoids the code path it checks: ray casting instead of edge
functions, explicit loops instead of vectorised einsums, exhaustive search
instead of spatial indexing, and full sign-pattern enumeration instead of the
counting recursion.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.spatial.transform import Rotation


# -- model -----------------------------------------------------------------------

def naive_decode(asset, beta, theta):
    """Blendshapes by loops, joint chain by explicit 4x4 products, LBS per vertex."""
    n = asset.n_vertices
    shaped = np.array(asset.template_vertices, dtype=np.float64)
    for s in range(asset.n_shape):
        for i in range(n):
            shaped[i] += beta[s] * asset.shape_basis[s, i]
    joints = np.zeros((asset.n_joints, 3))
    for j in range(asset.n_joints):
        for i in range(n):
            joints[j] += asset.joint_regressor[j, i] * shaped[i]
    rv = np.asarray(theta, dtype=np.float64).reshape(-1, 3)
    world = [None] * asset.n_joints
    pending = list(range(asset.n_joints))
    while pending:
        for j in list(pending):
            p = asset.joint_parents[j]
            if p >= 0 and world[p] is None:
                continue
            local = np.eye(4)
            local[:3, :3] = Rotation.from_rotvec(rv[j]).as_matrix()
            local[:3, 3] = joints[j] - (joints[p] if p >= 0 else 0.0)
            world[j] = local if p < 0 else world[p] @ local
            pending.remove(j)
    # skinning matrices: world transform composed with the inverse bind translation
    skin = []
    for j in range(asset.n_joints):
        bind = np.eye(4)
        bind[:3, 3] = -joints[j]
        skin.append(world[j] @ bind)
    posed = np.zeros((n, 3))
    for i in range(n):
        acc = np.zeros((4, 4))
        for j in range(asset.n_joints):
            acc += asset.skin_weights[i, j] * skin[j]
        posed[i] = (acc @ np.append(shaped[i], 1.0))[:3]
    lms = np.zeros((asset.n_landmarks, 3))
    for k in range(asset.n_landmarks):
        f = asset.faces[asset.landmark_faces[k]]
        for c in range(3):
            lms[k] += asset.landmark_bary[k, c] * posed[f[c]]
    return posed, lms


# -- raster ----------------------------------------------------------------------

def ray_directions(camera):
    """Per-pixel ray direction from the camera centre through each pixel centre (depth 1)."""
    f = camera.focal
    cx, cy = camera.principal_point
    u, v = np.meshgrid(np.arange(camera.width), np.arange(camera.height))
    return np.stack([(u - cx) / f, -(v - cy) / f, -np.ones_like(u, dtype=np.float64)], axis=-1)


def raycast(camera, vertices, faces):
    """Moller-Trumbore against every triangle for every pixel; returns (depth, face_id).

    Depth is the camera-space distance along the view axis. Triangles with any
    vertex at depth <= near are skipped, like the rasterizer. Ties keep the lower
    face index.
    """
    origin = np.array([0.0, 0.0, camera.distance])
    dirs = ray_directions(camera).reshape(-1, 3)
    depth = np.full(len(dirs), np.inf)
    fid = np.full(len(dirs), -1)
    vertices = np.asarray(vertices, dtype=np.float64)
    for fi, (a, b, c) in enumerate(np.asarray(faces)):
        p0, p1, p2 = vertices[a], vertices[b], vertices[c]
        if min(camera.distance - p[2] for p in (p0, p1, p2)) <= camera.near:
            continue
        e1, e2 = p1 - p0, p2 - p0
        pvec = np.cross(dirs, e2)
        det = pvec @ e1
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            tvec = origin - p0
            u = (pvec @ tvec) * inv
            qvec = np.cross(tvec, e1)
            v = (dirs * qvec).sum(axis=1) * inv
            t = (qvec @ e2) * inv
        hit = (det != 0) & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0) & (t <= camera.far)
        better = hit & (t < depth)
        depth[better] = t[better]
        fid[better] = fi
    shape = (camera.height, camera.width)
    return depth.reshape(shape), fid.reshape(shape)


def raycast_visibility(camera, vertices, faces, resolution):
    _, fid = raycast(camera.at_resolution(resolution), vertices, faces)
    vis = np.zeros(len(vertices), dtype=bool)
    for f in np.unique(fid[fid >= 0]):
        vis[np.asarray(faces)[f]] = True
    return vis


# -- masks / metrics -------------------------------------------------------------

def naive_boundary(mask):
    """Mask pixels with a 4-neighbour inside the frame that is outside the mask."""
    h, w = mask.shape
    out = np.zeros_like(mask, dtype=bool)
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w and not mask[yy, xx]:
                    out[y, x] = True
                    break
    return out


def all_pairs_chamfer(a, b):
    pa = np.argwhere(naive_boundary(a)).astype(np.float64)
    pb = np.argwhere(naive_boundary(b)).astype(np.float64)
    d = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2))
    h, w = a.shape
    return 0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean()) / np.hypot(w, h)


def segment_distance(p, a, b):
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / max(np.dot(ab, ab), 1e-300), 0.0, 1.0)
    return np.linalg.norm(p - (a + t * ab))


def point_triangle_exhaustive(p, a, b, c):
    """Distance via the plane projection if it lands inside, else the nearest edge."""
    n = np.cross(b - a, c - a)
    nn = np.linalg.norm(n)
    best = min(segment_distance(p, a, b), segment_distance(p, b, c), segment_distance(p, c, a))
    if nn > 0:
        n = n / nn
        q = p - np.dot(p - a, n) * n
        s0 = np.dot(np.cross(b - a, q - a), n)
        s1 = np.dot(np.cross(c - b, q - b), n)
        s2 = np.dot(np.cross(a - c, q - c), n)
        if s0 >= 0 and s1 >= 0 and s2 >= 0:
            best = min(best, abs(np.dot(p - a, n)))
    return best


def point_mesh_exhaustive(points, vertices, faces):
    out = np.empty(len(points))
    for i, p in enumerate(points):
        out[i] = min(point_triangle_exhaustive(p, *vertices[f]) for f in faces)
    return out


# -- statistics -----------------------------------------------------------------

def wilcoxon_enumeration(a, b):
    """Two-sided exact signed-rank p from all 2^n sign patterns (midranks for ties)."""
    from scipy.stats import rankdata
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    d = d[d != 0]
    n = len(d)
    r2 = np.rint(2 * rankdata(np.abs(d))).astype(np.int64)
    observed = int(r2[d > 0].sum())
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1
    stats = bits @ r2
    lower = np.mean(stats <= observed)
    upper = np.mean(stats >= observed)
    return min(1.0, 2.0 * min(lower, upper))


def wilcoxon_enumeration_small(a, b):
    """Same as above with itertools, for tiny n cross-checks of the oracle itself."""
    from scipy.stats import rankdata
    d = np.asarray(a, float) - np.asarray(b, float)
    d = d[d != 0]
    r = rankdata(np.abs(d))
    obs = r[d > 0].sum()
    vals = [sum(ri for ri, s in zip(r, signs) if s) for signs in itertools.product((0, 1), repeat=len(d))]
    vals = np.array(vals)
    return min(1.0, 2.0 * min(np.mean(vals <= obs + 1e-9), np.mean(vals >= obs - 1e-9)))

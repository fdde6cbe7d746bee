"""Procedural head-like assets for tests, demos and pipeline smoke runs."""

from __future__ import annotations

import numpy as np

from .defaults import N_CONTOUR_LANDMARKS, N_JAWLINE, N_LANDMARKS
from .model import ModelAsset

# toy head semi-axes (x: ear to ear, y: up, z: towards the face), model units
HEAD_AXES = np.array([0.075, 0.095, 0.085])
# chin and ear directions on the unit sphere; the jawline arc joins them
_CHIN = np.array([0.0, -0.75, 0.66])
_EAR = np.array([-1.0, -0.1, 0.0])


def icosphere(level: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosphere with outward (counter-clockwise) winding."""
    t = (1.0 + 5.0 ** 0.5) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    for _ in range(level):
        edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
        key = np.sort(edges, axis=1)
        uniq, inverse = np.unique(key, axis=0, return_inverse=True)
        mids = verts[uniq[:, 0]] + verts[uniq[:, 1]]
        mids /= np.linalg.norm(mids, axis=1, keepdims=True)
        mid_id = (inverse.reshape(3, -1) + len(verts)).T  # (F, 3): ab, bc, ca
        a, b, c = faces.T
        ab, bc, ca = mid_id.T
        faces = np.concatenate([
            np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1),
            np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1),
        ])
        verts = np.concatenate([verts, mids])
    return verts, faces


def _level_for(n_target: int) -> int:
    level = 0
    # keep room for 68 distinct landmark faces and a 65-vertex jawline
    while 10 * 4**level + 2 < max(n_target, N_JAWLINE) or 20 * 4**level < 2 * N_LANDMARKS:
        level += 1
    return level


def _monomials(u: np.ndarray, degree: int) -> np.ndarray:
    x, y, z = u.T
    cols = []
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            for k in range(degree + 1 - i - j):
                cols.append(x**i * y**j * z**k)
    return np.stack(cols, axis=1)


def _rigid_fields(points: np.ndarray) -> np.ndarray:
    """Orthonormal (3n, 6) basis of translations and small rotations about the centroid."""
    n = len(points)
    c = points - points.mean(axis=0)
    fields = []
    for a in np.eye(3):
        fields.append(np.tile(a, n))
        fields.append(np.cross(a, c).ravel())
    q, _ = np.linalg.qr(np.stack(fields, axis=1))
    return q


def _jawline(unit: np.ndarray, count: int) -> np.ndarray:
    a = _CHIN / np.linalg.norm(_CHIN)
    b = _EAR / np.linalg.norm(_EAR)
    normal = np.cross(a, b)
    normal /= np.linalg.norm(normal)
    e2 = np.cross(normal, a)
    span = np.arctan2(np.dot(b, e2), np.dot(b, a))
    phi = np.arctan2(unit @ e2, unit @ a)
    phi_c = np.clip(phi, 0.0, span)
    nearest = np.cos(phi_c)[:, None] * a + np.sin(phi_c)[:, None] * e2
    dist = np.arccos(np.clip(np.sum(unit * nearest, axis=1), -1.0, 1.0))
    chosen = np.argsort(dist, kind="stable")[:count]
    return chosen[np.argsort(phi[chosen], kind="stable")]


def make_toy_model(seed: int = 0, n_target: int = 642, n_shape: int = 10) -> ModelAsset:
    """Deterministic head-like asset.

    Subdivided icosphere scaled to head proportions, `n_shape` smooth random
    blendshapes with unit Frobenius norm, a root joint at the centroid and a
    neck joint below it, height-falloff skinning, 68 landmarks on distinct
    front faces and a 65-vertex jawline band along a chin-to-ear arc. The
    vertex count is the smallest icosphere size >= max(n_target, 65).
    """
    if n_shape < 1 or n_target < 12:
        raise ValueError("need n_shape >= 1 and n_target >= 12")
    rng = np.random.default_rng(seed)
    unit, faces = icosphere(_level_for(n_target))
    template = unit * HEAD_AXES
    n = len(template)

    if n_shape > 3 * n - 6:
        raise ValueError(f"n_shape={n_shape} exceeds 3 * n_vertices - 6 = {3 * n - 6}")
    # polynomials of degree d restricted to the sphere span (d + 1)^2 functions
    degree = 3
    while 3 * (degree + 1) ** 2 - 6 < n_shape:
        degree += 1
    feats = _monomials(unit, degree)
    raw = np.einsum("nf,sfc->snc", feats, rng.standard_normal((n_shape, feats.shape[1], 3)))
    raw = raw.reshape(n_shape, -1).T
    # like a PCA basis built after Procrustes alignment, keep shapes orthogonal
    # to rigid motion (3 translations, 3 infinitesimal rotations) so the basis
    # cannot imitate a head rotation
    rigid = _rigid_fields(template)
    raw -= rigid @ (rigid.T @ raw)
    # orthonormal columns: unit Frobenius norm each, well conditioned
    q, r = np.linalg.qr(raw)
    q *= np.sign(np.diag(r))
    basis = q.T.reshape(n_shape, n, 3)

    y = template[:, 1]
    height = y.max() - y.min()
    cap = y < y.min() + 0.15 * height
    regressor = np.zeros((2, n))
    regressor[0] = 1.0 / n
    regressor[1, cap] = 1.0 / cap.sum()
    neck_y = regressor[1] @ y
    w_neck = np.clip((y - neck_y) / (0.2 * height), 0.0, 1.0)
    skin = np.stack([1.0 - w_neck, w_neck], axis=1)

    centroids = unit[faces].mean(axis=1)
    front = np.flatnonzero(centroids[:, 2] > 0.2)
    low = front[centroids[front, 1] < -0.2]
    contour = rng.choice(low, N_CONTOUR_LANDMARKS, replace=False)
    rest = rng.choice(np.setdiff1d(front, contour), N_LANDMARKS - N_CONTOUR_LANDMARKS,
                      replace=False)
    lm_faces = np.concatenate([contour, rest])
    bary = rng.dirichlet(np.ones(3), size=N_LANDMARKS)

    return ModelAsset(
        template_vertices=template,
        faces=faces,
        shape_basis=basis,
        joint_regressor=regressor,
        joint_parents=np.array([-1, 0]),
        skin_weights=skin,
        landmark_faces=lm_faces,
        landmark_bary=bary,
        jawline_indices=_jawline(unit, N_JAWLINE),
        name=f"toy-head-{seed}",
        version="1",
        joint_names=("global", "neck"),
    )

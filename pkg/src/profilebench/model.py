"""Linear-blendshape articulated head model: asset type, decoding, canonicalization.

The decoder is FLAME-compatible by data but model-agnostic: shaped vertices
are the template plus a linear combination of shape blendshapes, joints are
regressed from the shaped mesh, and vertices are posed with linear blend
skinning over the joint tree. Expression and pose-corrective blendshapes are
not part of the model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .defaults import N_CONTOUR_LANDMARKS, N_LANDMARKS

_SMALL_ANGLE = 1e-8


class ModelAssetError(ValueError):
    """Raised when an asset's arrays are inconsistent or violate an invariant."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ModelAsset:
    template_vertices: np.ndarray  # (N, 3)
    faces: np.ndarray  # (F, 3) vertex indices
    shape_basis: np.ndarray  # (S, N, 3)
    joint_regressor: np.ndarray  # (J, N)
    joint_parents: np.ndarray  # (J,), -1 marks the root
    skin_weights: np.ndarray  # (N, J)
    landmark_faces: np.ndarray  # (K,)
    landmark_bary: np.ndarray  # (K, 3)
    jawline_indices: np.ndarray  # ordered vertex ids
    landmark_labels: tuple = ()
    contour_flags: np.ndarray | None = None  # (K,) bool
    name: str = "unnamed"
    version: str = "0"
    joint_names: tuple = ()
    joint_order: tuple = field(init=False, repr=False)

    def __post_init__(self):
        set_ = object.__setattr__
        for name in ("template_vertices", "shape_basis", "joint_regressor",
                     "skin_weights", "landmark_bary"):
            arr = np.asarray(getattr(self, name))
            if arr.dtype.kind != "f":
                arr = arr.astype(np.float64)
            set_(self, name, _readonly(arr))
        for name in ("faces", "joint_parents", "landmark_faces", "jawline_indices"):
            arr = np.asarray(getattr(self, name))
            if arr.size == 0:
                arr = arr.reshape(arr.shape if arr.ndim > 1 else (0,)).astype(np.int64)
            if arr.dtype.kind not in "iu":
                raise ModelAssetError(f"{name}: expected integer array, got {arr.dtype}")
            set_(self, name, _readonly(arr.astype(np.int64)))
        k = len(self.landmark_faces)
        if self.contour_flags is None:
            flags = np.zeros(k, dtype=bool)
            if k == N_LANDMARKS:
                flags[:N_CONTOUR_LANDMARKS] = True
        else:
            flags = np.asarray(self.contour_flags, dtype=bool)
        set_(self, "contour_flags", _readonly(flags))
        if not self.landmark_labels:
            set_(self, "landmark_labels", tuple(f"lm{i:02d}" for i in range(k)))
        else:
            set_(self, "landmark_labels", tuple(str(s) for s in self.landmark_labels))
        j = len(self.joint_parents)
        if not self.joint_names:
            set_(self, "joint_names", tuple(f"joint{i}" for i in range(j)))
        else:
            set_(self, "joint_names", tuple(str(s) for s in self.joint_names))
        set_(self, "joint_order", validate_asset(self))

    @property
    def n_vertices(self) -> int:
        return self.template_vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def n_shape(self) -> int:
        return self.shape_basis.shape[0]

    @property
    def n_joints(self) -> int:
        return self.joint_parents.shape[0]

    @property
    def n_landmarks(self) -> int:
        return self.landmark_faces.shape[0]

    @property
    def pose_dim(self) -> int:
        return 3 * self.n_joints

    @property
    def static_landmarks(self) -> np.ndarray:
        """Indices of non-contour landmarks."""
        return np.flatnonzero(~self.contour_flags)


def validate_asset(asset: ModelAsset, tol: float = 1e-6) -> tuple:
    """Check every asset invariant; return a parents-before-children joint order."""
    v = asset.template_vertices
    if v.ndim != 2 or v.shape[1] != 3:
        raise ModelAssetError(f"template_vertices: expected (N, 3), got {v.shape}")
    n = v.shape[0]
    if not np.all(np.isfinite(v)):
        raise ModelAssetError("template_vertices: non-finite values")
    f = asset.faces
    if f.ndim != 2 or f.shape[1] != 3:
        raise ModelAssetError(f"faces: expected (F, 3), got {f.shape}")
    bad = np.argwhere((f < 0) | (f >= n))
    if len(bad):
        r, c = bad[0]
        raise ModelAssetError(
            f"faces: index out of range at face {r}, corner {c}: {f[r, c]} (N={n})")
    b = asset.shape_basis
    if b.ndim != 3 or b.shape[1:] != (n, 3):
        raise ModelAssetError(f"shape_basis: expected (S, {n}, 3), got {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ModelAssetError("shape_basis: non-finite values")

    parents = asset.joint_parents
    if parents.ndim != 1 or parents.size == 0:
        raise ModelAssetError("joint_parents: expected a non-empty 1-D array")
    nj = parents.size
    roots = np.flatnonzero(parents < 0)
    if len(roots) != 1:
        raise ModelAssetError(f"joint_parents: expected exactly one root, found {len(roots)}")
    if np.any(parents >= nj) or np.any(parents < -1):
        i = int(np.flatnonzero((parents >= nj) | (parents < -1))[0])
        raise ModelAssetError(f"joint_parents: invalid parent {parents[i]} at joint {i}")
    order = []
    depth = {int(roots[0]): 0}
    # every joint must reach the root without revisiting a joint
    for j in range(nj):
        chain, cur = [], j
        while cur not in depth:
            if cur in chain:
                raise ModelAssetError(f"joint_parents: cycle through joint {cur}")
            chain.append(cur)
            cur = int(parents[cur])
        d = depth[cur]
        for c in reversed(chain):
            d += 1
            depth[c] = d
    order = tuple(sorted(range(nj), key=lambda j: (depth[j], j)))

    jr = asset.joint_regressor
    if jr.shape != (nj, n):
        raise ModelAssetError(f"joint_regressor: expected ({nj}, {n}), got {jr.shape}")
    w = asset.skin_weights
    if w.shape != (n, nj):
        raise ModelAssetError(f"skin_weights: expected ({n}, {nj}), got {w.shape}")
    neg = np.argwhere(w < 0)
    if len(neg):
        raise ModelAssetError(f"skin_weights: negative weight at row {neg[0][0]}")
    off = np.flatnonzero(np.abs(w.sum(axis=1) - 1.0) > tol)
    if len(off):
        i = int(off[0])
        raise ModelAssetError(
            f"skin_weights: row {i} sums to {w[i].sum():.6g}, expected 1")

    lf, lb = asset.landmark_faces, asset.landmark_bary
    k = lf.shape[0]
    if lf.ndim != 1 or lb.shape != (k, 3):
        raise ModelAssetError(f"landmark_bary: expected ({k}, 3), got {lb.shape}")
    bad = np.flatnonzero((lf < 0) | (lf >= f.shape[0]))
    if len(bad):
        raise ModelAssetError(f"landmark_faces: face index out of range at landmark {bad[0]}")
    if np.any(lb < 0):
        raise ModelAssetError(
            f"landmark_bary: negative weight at landmark {np.argwhere(lb < 0)[0][0]}")
    off = np.flatnonzero(np.abs(lb.sum(axis=1) - 1.0) > tol)
    if len(off):
        raise ModelAssetError(f"landmark_bary: row {off[0]} does not sum to 1")
    if len(asset.landmark_labels) != k:
        raise ModelAssetError("landmark_labels: length does not match landmark count")
    if asset.contour_flags.shape != (k,):
        raise ModelAssetError("contour_flags: length does not match landmark count")
    if k == N_LANDMARKS and int(asset.contour_flags.sum()) != N_CONTOUR_LANDMARKS:
        raise ModelAssetError(
            f"contour_flags: 68-point embedding needs exactly {N_CONTOUR_LANDMARKS} contour flags")

    jaw = asset.jawline_indices
    if jaw.ndim != 1:
        raise ModelAssetError("jawline_indices: expected a 1-D array")
    bad = np.flatnonzero((jaw < 0) | (jaw >= n))
    if len(bad):
        raise ModelAssetError(f"jawline_indices: index out of range at position {bad[0]}")
    if len(np.unique(jaw)) != len(jaw):
        raise ModelAssetError("jawline_indices: duplicate vertex ids")
    if len(asset.joint_names) != nj:
        raise ModelAssetError("joint_names: length does not match joint count")
    return order


@dataclass(frozen=True)
class PoseParams:
    """Axis-angle rotations: the root (global) joint plus every other joint."""

    global_rotation: np.ndarray
    articulated_rotations: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.global_rotation, dtype=np.float64).reshape(3)
        a = np.asarray(self.articulated_rotations, dtype=np.float64).reshape(-1, 3)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(a))):
            raise ValueError("pose parameters must be finite")
        object.__setattr__(self, "global_rotation", g)
        object.__setattr__(self, "articulated_rotations", a)

    @classmethod
    def zeros(cls, n_joints: int) -> "PoseParams":
        return cls(np.zeros(3), np.zeros((n_joints - 1, 3)))

    @classmethod
    def from_vector(cls, vec) -> "PoseParams":
        vec = np.asarray(vec, dtype=np.float64).reshape(-1, 3)
        return cls(vec[0], vec[1:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.global_rotation, self.articulated_rotations.ravel()])

    def is_canonical(self) -> bool:
        return bool(np.all(np.linalg.norm(self.as_vector().reshape(-1, 3), axis=1)
                           <= np.pi + 1e-12))

    def canonical(self) -> "PoseParams":
        return PoseParams.from_vector(canonical_axis_angle(self.as_vector().reshape(-1, 3)))


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=np.float64))
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class LandmarkSet3D:
    points: np.ndarray
    labels: tuple
    contour_flags: np.ndarray

    @property
    def static_points(self) -> np.ndarray:
        return self.points[~self.contour_flags]


# -- rotations -----------------------------------------------------------------

def skew(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -v[..., 2], v[..., 1]
    out[..., 1, 0], out[..., 1, 2] = v[..., 2], -v[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -v[..., 1], v[..., 0]
    return out


def _rodrigues_coeffs(theta):
    """sin(t)/t, (1-cos t)/t^2, (t - sin t)/t^3 with series below the small-angle cutoff."""
    small = theta < _SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(t) / t)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(t)) / t**2)
    c = np.where(small, 1.0 / 6.0 - theta**2 / 120.0, (t - np.sin(t)) / t**3)
    return a, b, c


def rodrigues(rvec: np.ndarray) -> np.ndarray:
    """Axis-angle vectors (..., 3) to rotation matrices (..., 3, 3)."""
    rvec = np.asarray(rvec, dtype=np.float64)
    theta = np.linalg.norm(rvec, axis=-1)
    a, b, _ = _rodrigues_coeffs(theta)
    k = skew(rvec)
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + a[..., None, None] * k + b[..., None, None] * (k @ k)


def left_jacobian(rvec: np.ndarray) -> np.ndarray:
    """SO(3) left Jacobian: d exp(r)/dr_a @ exp(r)^T == skew(J_l(r) e_a)."""
    rvec = np.asarray(rvec, dtype=np.float64)
    theta = np.linalg.norm(rvec, axis=-1)
    _, b, c = _rodrigues_coeffs(theta)
    k = skew(rvec)
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + b[..., None, None] * k + c[..., None, None] * (k @ k)


def rotation_to_axis_angle(rot: np.ndarray) -> np.ndarray:
    """Inverse of `rodrigues` on the principal branch (angle in [0, pi])."""
    rot = np.asarray(rot, dtype=np.float64)
    cos = np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos)
    w = np.array([rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]])
    if angle < 1e-6:
        return 0.5 * w
    if np.pi - angle < 1e-4:
        # axis from the symmetric part; sign fixed by the antisymmetric residue
        sym = (rot + np.eye(3)) / 2.0
        i = int(np.argmax(np.diag(sym)))
        axis = sym[:, i] / np.sqrt(max(sym[i, i], 1e-300))
        if np.dot(axis, w) < 0:
            axis = -axis
        return axis * angle
    return w * (angle / (2.0 * np.sin(angle)))


def canonical_axis_angle(rvec: np.ndarray) -> np.ndarray:
    """Map axis-angle vectors to the equivalent vector with angle <= pi."""
    rvec = np.array(rvec, dtype=np.float64)
    flat = rvec.reshape(-1, 3)
    for i, r in enumerate(flat):
        theta = np.linalg.norm(r)
        if theta > np.pi:
            turns = theta - 2.0 * np.pi * np.round(theta / (2.0 * np.pi))
            flat[i] = r / theta * turns
    return flat.reshape(rvec.shape)


# -- decoding ------------------------------------------------------------------

def _as_beta(asset: ModelAsset, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if beta.shape[0] != asset.n_shape:
        raise ValueError(f"beta has length {beta.shape[0]}, asset expects {asset.n_shape}")
    if not np.all(np.isfinite(beta)):
        raise ValueError("beta must be finite")
    return beta


def _as_pose(asset: ModelAsset, theta) -> np.ndarray:
    if isinstance(theta, PoseParams):
        vec = theta.as_vector()
    else:
        vec = np.asarray(theta, dtype=np.float64).reshape(-1)
    if vec.shape[0] != asset.pose_dim:
        raise ValueError(f"pose has length {vec.shape[0]}, asset expects {asset.pose_dim}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("pose must be finite")
    return vec.reshape(-1, 3)


class _Posing:
    """World transforms of every joint for one (shaped mesh, pose) pair."""

    def __init__(self, asset: ModelAsset, shaped: np.ndarray, rvecs: np.ndarray):
        self.asset = asset
        self.shaped = shaped
        self.rvecs = rvecs
        self.joints = asset.joint_regressor @ shaped
        self.local = rodrigues(rvecs)
        nj = asset.n_joints
        parents = asset.joint_parents
        self.world_rot = np.empty((nj, 3, 3))
        self.world_pos = np.empty((nj, 3))
        for j in asset.joint_order:
            p = parents[j]
            if p < 0:
                self.world_rot[j] = self.local[j]
                self.world_pos[j] = self.joints[j]
            else:
                self.world_rot[j] = self.world_rot[p] @ self.local[j]
                self.world_pos[j] = self.world_pos[p] + self.world_rot[p] @ (
                    self.joints[j] - self.joints[p])
        # joint j maps x to W_j x + offset_j
        self.offset = self.world_pos - np.einsum("jab,jb->ja", self.world_rot, self.joints)

    def posed(self, rows=None) -> np.ndarray:
        w = self.asset.skin_weights if rows is None else self.asset.skin_weights[rows]
        x = self.shaped if rows is None else self.shaped[rows]
        blend = np.einsum("nj,jab->nab", w, self.world_rot)
        return np.einsum("nab,nb->na", blend, x) + w @ self.offset

    def linear_part(self, disp: np.ndarray, rows=None) -> np.ndarray:
        """Differential of posed vertices along shaped-vertex directions (..., N, 3)."""
        asset = self.asset
        jd = np.einsum("jn,...nc->...jc", asset.joint_regressor, disp)
        parents = asset.joint_parents
        pos = np.empty_like(jd)
        for j in asset.joint_order:
            p = parents[j]
            if p < 0:
                pos[..., j, :] = jd[..., j, :]
            else:
                pos[..., j, :] = pos[..., p, :] + np.einsum(
                    "ab,...b->...a", self.world_rot[p], jd[..., j, :] - jd[..., p, :])
        off = pos - np.einsum("jab,...jb->...ja", self.world_rot, jd)
        w = asset.skin_weights if rows is None else asset.skin_weights[rows]
        x = disp if rows is None else disp[..., rows, :]
        blend = np.einsum("nj,jab->nab", w, self.world_rot)
        return np.einsum("nab,...nb->...na", blend, x) + np.einsum("nj,...jc->...nc", w, off)

    def subtrees(self):
        parents = self.asset.joint_parents
        nj = len(parents)
        members = [[k] for k in range(nj)]
        for j in reversed(self.asset.joint_order):
            p = parents[j]
            if p >= 0:
                members[p].extend(members[j])
        return members

    def rotation_part(self, rows=None) -> np.ndarray:
        """d posed / d rvec as (n_rows, 3, 3*J)."""
        asset = self.asset
        w = asset.skin_weights if rows is None else asset.skin_weights[rows]
        x = self.shaped if rows is None else self.shaped[rows]
        nj = asset.n_joints
        # per-joint transformed positions W_j x + offset_j: (n, J, 3)
        q = np.einsum("jab,nb->nja", self.world_rot, x) + self.offset[None]
        jl = left_jacobian(self.rvecs)
        out = np.zeros((x.shape[0], 3, 3 * nj))
        for k, sub in enumerate(self.subtrees()):
            p = asset.joint_parents[k]
            parent_rot = np.eye(3) if p < 0 else self.world_rot[p]
            omega = parent_rot @ jl[k]  # columns: world angular velocity per component
            ws = w[:, sub]
            u = np.einsum("nj,nja->na", ws, q[:, sub]) - ws.sum(axis=1)[:, None] * self.world_pos[k]
            # d v / d r_{k,a} = omega_a x u
            out[:, :, 3 * k:3 * k + 3] = np.cross(omega.T[None, :, :], u[:, None, :]).transpose(0, 2, 1)
        return out


def shape_vertices(asset: ModelAsset, beta) -> np.ndarray:
    beta = _as_beta(asset, beta)
    return asset.template_vertices + np.einsum("s,snc->nc", beta, asset.shape_basis)


def landmarks_from_vertices(asset: ModelAsset, vertices: np.ndarray) -> np.ndarray:
    corners = vertices[asset.faces[asset.landmark_faces]]  # (K, 3, 3)
    return np.einsum("kc,kcd->kd", asset.landmark_bary, corners)


def decode(asset: ModelAsset, beta, theta) -> tuple[Mesh, LandmarkSet3D]:
    """Shape, pose and embed landmarks.

    `beta` is a length-S coefficient vector; `theta` is a `PoseParams` or a
    flat vector of 3*J axis-angle values (root first).
    """
    shaped = shape_vertices(asset, beta)
    posing = _Posing(asset, shaped, _as_pose(asset, theta))
    verts = posing.posed()
    mesh = Mesh(verts, asset.faces)
    lms = LandmarkSet3D(landmarks_from_vertices(asset, verts), asset.landmark_labels,
                        asset.contour_flags)
    return mesh, lms


def decode_jacobian(asset: ModelAsset, beta, theta, rows=None):
    """Posed vertices and their Jacobian w.r.t. [beta, pose vector].

    Returns `(vertices, jac)` with `jac` of shape (n_rows, 3, S + 3J). `rows`
    restricts both outputs to a subset of vertex ids.
    """
    shaped = shape_vertices(asset, beta)
    posing = _Posing(asset, shaped, _as_pose(asset, theta))
    verts = posing.posed(rows)
    d_beta = posing.linear_part(asset.shape_basis, rows)  # (S, n, 3)
    d_pose = posing.rotation_part(rows)
    jac = np.concatenate([d_beta.transpose(1, 2, 0), d_pose], axis=2)
    return verts, jac


def landmark_jacobian(asset: ModelAsset, beta, theta):
    """Landmarks (K, 3) and their Jacobian (K, 3, S + 3J)."""
    face_verts = asset.faces[asset.landmark_faces]  # (K, 3)
    rows, inverse = np.unique(face_verts.ravel(), return_inverse=True)
    verts, jac = decode_jacobian(asset, beta, theta, rows)
    idx = inverse.reshape(face_verts.shape)
    lms = np.einsum("kc,kcd->kd", asset.landmark_bary, verts[idx])
    ljac = np.einsum("kc,kcdp->kdp", asset.landmark_bary, jac[idx])
    return lms, ljac


def face_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Unnormalized (area-weighted) face normals."""
    tri = vertices[faces]
    return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])


def vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    fn = face_normals(vertices, faces)
    vn = np.zeros_like(vertices, dtype=np.float64)
    for c in range(3):
        np.add.at(vn, faces[:, c], fn)
    norm = np.linalg.norm(vn, axis=1, keepdims=True)
    return np.divide(vn, norm, out=np.zeros_like(vn), where=norm > 0)


def canonicalize_profile(mesh: Mesh, yaw: float) -> tuple[Mesh, float]:
    """Flip a negative-yaw mesh across x=0 so that yaw becomes positive."""
    if yaw >= 0:
        return mesh, yaw
    verts = mesh.vertices * np.array([-1.0, 1.0, 1.0])
    # reflection reverses orientation; swap two corners to keep normals outward
    faces = mesh.faces[:, ::-1].copy()
    return Mesh(verts, faces), -yaw

"""Property-based checks of the invariants each module promises."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from profilebench.masks import boundary, distance_to, shift
from profilebench.metrics import boundary_chamfer, silhouette_iou, umeyama_align
from profilebench.model import canonicalize_profile, decode, rodrigues
from profilebench.raster import Camera, project, unproject
from profilebench.sampling import SampleSpec, assign_split, sample_record, split_sizes
from profilebench.stats import wilcoxon_signed_rank
from profilebench.toy import make_toy_model

TOY = make_toy_model(0)
FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
masks = arrays(bool, st.tuples(st.integers(4, 24), st.integers(4, 24)))


def vec(n):
    return arrays(np.float64, n, elements=finite)


@FAST
@given(vec(TOY.n_shape), vec(TOY.pose_dim))
def test_decode_is_finite_and_landmarks_on_surface(beta, theta):
    mesh, lms = decode(TOY, beta, theta)
    assert np.all(np.isfinite(mesh.vertices))
    tri = mesh.vertices[TOY.faces[TOY.landmark_faces]]
    np.testing.assert_allclose(lms.points, np.einsum("kc,kcd->kd", TOY.landmark_bary, tri), atol=1e-9)


@FAST
@given(vec(TOY.n_shape), vec(3))
def test_global_rotation_preserves_shape(beta, rot):
    theta = np.concatenate([rot, np.zeros(3)])
    a = decode(TOY, beta, np.zeros(TOY.pose_dim))[0].vertices
    b = decode(TOY, beta, theta)[0].vertices
    da = np.linalg.norm(a[:50, None] - a[None, :50], axis=2)
    db = np.linalg.norm(b[:50, None] - b[None, :50], axis=2)
    np.testing.assert_allclose(da, db, atol=1e-9)


@FAST
@given(vec(3))
def test_rodrigues_is_a_rotation(r):
    m = rodrigues(r)
    np.testing.assert_allclose(m.T @ m, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(m) - 1) < 1e-12


@FAST
@given(vec(TOY.n_shape), st.floats(-np.pi, np.pi))
def test_canonicalization_yaw_non_negative_and_idempotent(beta, yaw):
    mesh = decode(TOY, beta * 0.2, np.zeros(TOY.pose_dim))[0]
    once, y1 = canonicalize_profile(mesh, yaw)
    twice, y2 = canonicalize_profile(once, y1)
    assert y1 >= 0 and y1 == y2
    np.testing.assert_array_equal(once.vertices, twice.vertices)


@FAST
@given(arrays(np.float64, (20, 3), elements=st.floats(-0.2, 0.2)))
def test_project_unproject_round_trip(pts):
    cam = Camera(width=64, height=48)
    pix, depth, valid = project(cam, pts)
    assert valid.all()
    np.testing.assert_allclose(unproject(cam, pix, depth), pts, atol=1e-12)


@FAST
@given(arrays(np.float64, (12, 3), elements=st.floats(-5, 5)), vec(3), vec(3))
def test_umeyama_exact_on_rigid_copies(src, r, t):
    src = src + np.arange(12)[:, None] * np.array([0.3, -0.2, 0.5]) + np.eye(3)[np.arange(12) % 3]
    s = np.linalg.svd(src - src.mean(axis=0), compute_uv=False)
    if s[1] < 1e-3 * s[0] or s[2] < 1e-3 * s[0]:
        return
    dst = src @ rodrigues(r).T + t
    tf = umeyama_align(src, dst)
    np.testing.assert_allclose(tf.apply(src), dst, atol=1e-8)


@FAST
@given(masks, masks)
def test_iou_bounds_and_symmetry(a, b):
    if a.shape != b.shape:
        b = np.resize(b, a.shape)
    v = silhouette_iou(a, b)
    assert 0.0 <= v <= 1.0 and v == silhouette_iou(b, a)


@FAST
@given(masks, masks)
def test_chamfer_symmetric_and_non_negative(a, b):
    if a.shape != b.shape:
        b = np.resize(b, a.shape)
    if not boundary(a).any() or not boundary(b).any():
        return
    d = boundary_chamfer(a, b)
    assert d >= 0 and d == boundary_chamfer(b, a)
    assert boundary_chamfer(a, a) == 0.0


@FAST
@given(masks)
def test_boundary_subset_and_distance_zero_on_it(m):
    b = boundary(m)
    assert not (b & ~m).any()
    if b.any():
        assert np.all(distance_to(b)[b] == 0)


@FAST
@given(masks, st.integers(-30, 30), st.integers(-30, 30))
def test_shift_preserves_or_drops_pixels(m, dx, dy):
    out = shift(m, dx, dy)
    assert out.sum() <= m.sum()
    back = shift(out, -dx, -dy)
    assert not (back & ~m).any()


@FAST
@given(st.integers(0, 10**6))
def test_sampler_bounds(i):
    spec = SampleSpec(shape_dim=8)
    rec = sample_record(spec, i)
    assert np.abs(rec.beta).max() <= spec.clip and np.abs(rec.pose_scalars).max() <= spec.clip
    assert spec.yaw_min <= rec.yaw_deg <= spec.yaw_max


@FAST
@given(st.integers(1, 10**6))
def test_split_partition(n):
    sizes = split_sizes(n)
    assert sum(sizes) == n
    assert assign_split(n - 1, sizes) in ("train", "val", "test")


@FAST
@given(arrays(np.float64, 10, elements=st.floats(-10, 10)), st.floats(0.01, 5))
def test_wilcoxon_flip_symmetry(d, c):
    d = d + np.sign(d + 1e-9) * c  # keep differences away from zero
    a = np.zeros_like(d)
    p1 = wilcoxon_signed_rank(d, a)
    p2 = wilcoxon_signed_rank(a, d)
    assert 0 < p1 <= 1 and abs(p1 - p2) < 1e-12

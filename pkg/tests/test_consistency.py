import math

import numpy as np
import pytest

from profilebench.consistency import (ConsistencyConfig, ConsistencyError, boundary_band,
                                      consistency_check, edge_agreement, resize_nearest,
                                      sobel_edges, sobel_magnitude, to_gray)
from profilebench.masks import boundary
from profilebench.pipeline import silhouette_rgb


def disk(size=128, r=30.0, centre=None):
    cy, cx = centre if centre is not None else ((size - 1) / 2, (size - 1) / 2)
    yy, xx = np.indices((size, size))
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def test_step_edge_response():
    img = np.zeros((20, 20))
    img[:, 10:] = 1.0
    mag = sobel_magnitude(img)
    # unit step: |gx| = 4 on both columns flanking the step, normalised by 4 sqrt 2
    np.testing.assert_allclose(mag[:, 9], 1 / math.sqrt(2))
    np.testing.assert_allclose(mag[:, 10], 1 / math.sqrt(2))
    assert np.all(mag[:, :8] == 0) and np.all(mag[:, 12:] == 0)
    edges = sobel_edges(img)
    assert edges[:, 9:11].all() and edges.sum() == 40


def test_constant_image_has_no_edges():
    assert not sobel_edges(np.full((16, 16), 0.4)).any()


def test_checkerboard_blocks():
    # 4-px blocks: edges at every block border, flat block interiors
    img = (np.indices((32, 32)) // 4).sum(axis=0) % 2
    edges = sobel_edges(img.astype(float))
    assert edges[:, 3].all() and edges[:, 4].all()
    assert not edges[1:3, 1:3].any() and not edges[5:7, 9:11].any()
    assert sobel_magnitude(np.ones((4, 4))).max() == 0.0
    assert sobel_magnitude(img).max() <= 1.0


def test_to_gray_luma_and_scaling():
    rgb = np.zeros((2, 2, 3), np.uint8)
    rgb[0, 0] = [255, 0, 0]
    rgb[0, 1] = [0, 255, 0]
    rgb[1, 0] = [0, 0, 255]
    g = to_gray(rgb)
    np.testing.assert_allclose(g, [[0.299, 0.587], [0.114, 0.0]])
    np.testing.assert_allclose(to_gray(np.full((2, 2), 255, np.uint8)), 1.0)
    with pytest.raises(ConsistencyError):
        to_gray(np.zeros((2, 2, 2, 2)))


def test_band_area_is_annulus():
    r, w = 40.0, 8.0
    band = boundary_band(disk(200, r), w)
    area = 4 * math.pi * r * w
    assert abs(band.sum() - area) / area < 0.1


def test_band_grows_with_width_and_zero_is_boundary():
    m = disk(96, 25)
    sizes = [boundary_band(m, w).sum() for w in (0, 1, 2, 4, 8)]
    assert sizes == sorted(sizes) and len(set(sizes)) == len(sizes)
    np.testing.assert_array_equal(boundary_band(m, 0), boundary(m))
    with pytest.raises(ConsistencyError):
        boundary_band(np.zeros((8, 8)), 2)


def test_self_render_is_sub_pixel():
    m = disk(128, 30)
    rep = consistency_check(silhouette_rgb(m), m)
    assert rep.matched.mean_dist_px < 1.0 and rep.matched.coverage == 1.0


def test_shifted_control_is_worse():
    for r, c in ((30, (60, 60)), (22, (50, 70)), (35, (64, 58))):
        m = disk(128, r, c)
        rep = consistency_check(silhouette_rgb(m), m)
        assert rep.matched.mean_dist_px < rep.shifted.mean_dist_px
        assert rep.shifted.coverage < rep.matched.coverage


def test_uniform_image_reports_no_edges():
    m = disk(64, 15)
    rep = consistency_check(np.full((64, 64, 3), 128, np.uint8), m)
    assert rep.matched.reason == "no_edges_in_band" and math.isinf(rep.matched.mean_dist_px)
    assert not rep.matched.valid
    assert edge_agreement(boundary(m), np.zeros_like(m), 2).coverage == 0.0


def test_working_resolution_and_determinism():
    m = disk(256, 60)
    rgb = silhouette_rgb(m)
    cfg = ConsistencyConfig(resolution=128)
    a, b = consistency_check(rgb, m, cfg), consistency_check(rgb, m, cfg)
    assert a.to_dict() == b.to_dict() and a.resolution == (128, 128)
    assert a.matched.mean_dist_px < 1.0
    assert set(a.row()) >= {"matched_mean_dist_px", "shifted_coverage"}


def test_control_shift_pushed_out_of_frame():
    m = disk(64, 10, (31, 58))
    cfg = ConsistencyConfig(control_shift=(64, 0))
    rep = consistency_check(silhouette_rgb(m), m, cfg)
    assert rep.shifted.reason == "empty_boundary"


def test_errors_and_config_validation():
    with pytest.raises(ConsistencyError):
        consistency_check(np.zeros((8, 8)), np.zeros((8, 8), bool))
    for kw in ({"band_width_px": 0}, {"sobel_threshold": 1.5}, {"control_shift": (1,)},
               {"coverage_radius_px": -1}, {"resolution": 0}):
        with pytest.raises(ValueError):
            ConsistencyConfig(**kw)


def test_resize_nearest_integer_factor():
    a = np.arange(16).reshape(4, 4)
    up = resize_nearest(a, (8, 8))
    np.testing.assert_array_equal(up[::2, ::2], a)
    np.testing.assert_array_equal(resize_nearest(up, (4, 4)), a)

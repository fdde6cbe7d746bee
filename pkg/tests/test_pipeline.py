import hashlib
import json
import shutil
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from profilebench import pipeline
from profilebench.asset_io import load_model_asset, save_model_asset
from profilebench.formats import read_csv, read_json, read_mask_png, read_obj, read_pfm, write_json, write_obj
from profilebench.manifest import read_manifest
from profilebench.metrics import RigidTransform
from profilebench.model import decode
from profilebench.raster import Camera, rasterize
from profilebench.sampling import SampleRecord, SampleSpec
from profilebench.toy import make_toy_model

CAM = Camera(width=96, height=96)
SPEC = SampleSpec(shape_dim=10)


def _digest_tree(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    asset_dir = save_model_asset(make_toy_model(0), root / "asset")
    data = root / "data"
    pipeline.cmd_sample(data, 10, SPEC, asset_dir, CAM)
    res = pipeline.cmd_render(data / "manifest.jsonl", asset_dir, vis_resolution=64)
    assert res.n_failed == 0
    return root, asset_dir, data


def _gt_predictions(data, out, transform=None):
    m = read_manifest(data / "manifest.jsonl")
    out.mkdir(parents=True, exist_ok=True)
    for row in m.rows:
        mesh = read_obj(m.path(row, "mesh"))
        if transform is not None:
            mesh = transform.apply_mesh(mesh)
        write_obj(out / f"{row['id']:06d}.obj", mesh)
    return out


# -- sample / render ------------------------------------------------------------------

def test_sample_is_deterministic(tmp_path):
    pipeline.cmd_sample(tmp_path / "a", 6, SPEC)
    pipeline.cmd_sample(tmp_path / "b", 6, SPEC)
    for i in range(6):
        a = (tmp_path / "a" / "params" / f"{i:06d}.json").read_bytes()
        assert a == (tmp_path / "b" / "params" / f"{i:06d}.json").read_bytes()


def test_sample_header_and_splits(dataset):
    _, _, data = dataset
    m = read_manifest(data / "manifest.jsonl")
    assert [r["split"] for r in m.rows] == ["train"] * 8 + ["val", "test"]
    h = m.header
    assert h["split_sizes"] == [8, 1, 1] and len(h["asset_hash"]) == 64
    assert "yaw" in h["yaw_composition"] and h["spec"]["sigma"] == 0.7
    assert h["config"]["protocol"]["camera_distance"] == 0.8
    assert Camera.from_dict(h["camera"]) == CAM


def test_sample_rejects_empty(tmp_path):
    with pytest.raises(pipeline.PipelineError, match="positive"):
        pipeline.cmd_sample(tmp_path, 0)
    assert not (tmp_path / "manifest.jsonl").exists()


def test_render_outputs_are_complete_and_consistent(dataset):
    _, asset_dir, data = dataset
    m = read_manifest(data / "manifest.jsonl")
    m.validate(check_files=True)
    asset = load_model_asset(asset_dir)
    for row in m.rows[:3]:
        rec = SampleRecord.from_dict(read_json(m.path(row, "params")))
        mesh, lms = decode(asset, rec.beta, rec.theta)
        buf = rasterize(CAM, mesh)
        sil = read_mask_png(m.path(row, "silhouette"))
        fid = np.load(m.path(row, "face_id"))
        depth = read_pfm(m.path(row, "depth"))
        np.testing.assert_array_equal(sil, buf.silhouette)
        np.testing.assert_array_equal(fid, buf.face_id)
        np.testing.assert_array_equal(depth[sil], buf.depth[sil].astype(np.float32))
        assert np.all(depth[~sil] == 0)
        np.testing.assert_array_equal(read_obj(m.path(row, "mesh")).vertices, mesh.vertices)
        np.testing.assert_array_equal(np.array(read_json(m.path(row, "landmarks_3d"))), lms.points)
        assert np.load(m.path(row, "visibility")).shape == (asset.n_vertices,)
        assert row["silhouette_pixels"] == int(sil.sum())


def test_render_is_deterministic_and_worker_independent(dataset, tmp_path):
    _, asset_dir, data = dataset
    copy = tmp_path / "copy"
    shutil.copytree(data, copy)
    for f in (copy / "render").iterdir():
        f.unlink()
    res = pipeline.cmd_render(copy / "manifest.jsonl", asset_dir, vis_resolution=64, workers=2)
    assert res.n_ok == 10
    ref, new = _digest_tree(data / "render"), _digest_tree(copy / "render")
    assert ref == new


def test_render_rejects_other_asset(dataset, tmp_path):
    _, _, data = dataset
    other = save_model_asset(make_toy_model(5), tmp_path / "other")
    with pytest.raises(Exception, match="hash"):
        pipeline.cmd_render(data / "manifest.jsonl", other)


def test_conditioning_bundles(dataset, tmp_path):
    _, _, data = dataset
    res = pipeline.cmd_export_conditioning(data / "manifest.jsonl", tmp_path / "cond")
    assert res.n_ok == 10 and res.n_failed == 0
    p = read_json(tmp_path / "cond" / "000000" / "prompt.json")
    assert p["num_inference_steps"] == 25 and p["guidance_scale"] == 7.5
    assert p["controlnet_conditioning_scale"] == [0.7, 0.4]
    assert p["conditioning_order"] == ["depth", "normal"] and p["seed"] > 0
    assert (tmp_path / "cond" / "000000" / "depth.png").exists()


def test_conditioning_reports_missing_renders(tmp_path):
    pipeline.cmd_sample(tmp_path, 3, SPEC)
    res = pipeline.cmd_export_conditioning(tmp_path / "manifest.jsonl")
    assert res.n_failed == 3 and res.exit_code == 1
    assert "depth and normal" in res.failures[0][2]


# -- evaluate -------------------------------------------------------------------------

def test_perfect_predictions(dataset, tmp_path):
    _, asset_dir, data = dataset
    before = _digest_tree(data)
    pred = _gt_predictions(data, tmp_path / "pred")
    for protocol in ("aligned", "raw"):
        res = pipeline.cmd_evaluate(data / "manifest.jsonl", asset_dir, pred, tmp_path / protocol,
                                    protocol=protocol, vis_resolution=64)
        assert res.n_ok == 10
        rows, cfg = read_csv(tmp_path / protocol / "metrics.csv")
        assert cfg["protocol"] == protocol
        for r in rows:
            assert float(r["e_all"]) < 1e-12 and float(r["e_vis"]) < 1e-12
            assert float(r["iou"]) == 1.0 and float(r["boundary_chamfer"]) == 0.0
    assert _digest_tree(data) == before


def test_rigid_motion_fixture(dataset, tmp_path):
    _, asset_dir, data = dataset
    tf = RigidTransform(Rotation.from_rotvec([0.05, -0.1, 0.02]).as_matrix(), [0.01, -0.02, 0.015])
    pred = _gt_predictions(data, tmp_path / "pred", tf)
    aligned = pipeline.cmd_evaluate(data / "manifest.jsonl", asset_dir, pred, tmp_path / "a",
                                    vis_resolution=64)
    raw = pipeline.cmd_evaluate(data / "manifest.jsonl", asset_dir, pred, tmp_path / "r",
                                protocol="raw", vis_resolution=64)
    for r in read_csv(tmp_path / "a" / "metrics.csv")[0]:
        assert float(r["e_all"]) < 1e-6 and float(r["e_jaw"]) < 1e-6
    for r in read_csv(tmp_path / "r" / "metrics.csv")[0]:
        assert float(r["e_all"]) > 1e-3 and float(r["iou"]) < 1.0
    assert aligned.summary["metrics"]["e_all"]["mean"] < 1e-6 < raw.summary["metrics"]["e_all"]["mean"]


def test_missing_and_bad_predictions(dataset, tmp_path):
    _, asset_dir, data = dataset
    pred = _gt_predictions(data, tmp_path / "pred")
    (pred / "000003.obj").unlink()
    write_json(pred / "000003.json", {"beta": [0.0] * 10, "theta": [0.0] * 6})
    (pred / "000004.obj").unlink()
    (pred / "000005.obj").write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    res = pipeline.cmd_evaluate(data / "manifest.jsonl", asset_dir, pred, tmp_path / "out",
                                vis_resolution=64, split="train")
    assert res.n_ok == 6 and res.n_skipped == 1 and res.n_failed == 1
    reasons = {i: r for i, r, _ in res.failures}
    assert reasons == {4: "missing_prediction", 5: "invalid_prediction"}
    s = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert len(s["excluded"]) == 2 and s["metrics"]["iou"]["n"] == 6


def test_paired_comparison(dataset, tmp_path):
    _, asset_dir, data = dataset
    good = _gt_predictions(data, tmp_path / "good")
    tf = RigidTransform(np.eye(3), [0.0, 0.0, 0.004])
    worse = _gt_predictions(data, tmp_path / "worse", tf)
    res = pipeline.cmd_evaluate(data / "manifest.jsonl", asset_dir, good, tmp_path / "out",
                                protocol="raw", vis_resolution=64, compare_dir=worse, n_boot=200)
    paired = res.summary["paired"]
    assert paired["n_common"] == 10
    assert paired["e_all"]["mean_diff"] < 0 and paired["e_all"]["wilcoxon_p"] < 0.01


def test_stats_command(dataset, tmp_path):
    _, asset_dir, data = dataset
    good = _gt_predictions(data, tmp_path / "good")
    worse = _gt_predictions(data, tmp_path / "worse", RigidTransform(np.eye(3), [0.003, 0, 0]))
    for name, d in (("g", good), ("w", worse)):
        pipeline.cmd_evaluate(data / "manifest.jsonl", asset_dir, d, tmp_path / name, protocol="raw",
                              vis_resolution=64)
    a, b = tmp_path / "g" / "metrics.csv", tmp_path / "w" / "metrics.csv"
    r1 = pipeline.cmd_stats(a, b, "e_all", tmp_path / "s1.json", n_boot=300, seed=2)
    r2 = pipeline.cmd_stats(a, b, "e_all", tmp_path / "s2.json", n_boot=300, seed=2)
    assert (tmp_path / "s1.json").read_text() == (tmp_path / "s2.json").read_text()
    assert r1.summary["mean_diff"] < 0
    with pytest.raises(pipeline.PipelineError, match="zero"):
        pipeline.cmd_stats(a, a, "e_all")


# -- consistency / fit ----------------------------------------------------------------

def test_consistency_command(dataset, tmp_path):
    _, _, data = dataset
    copy = tmp_path / "copy"
    shutil.copytree(data, copy)
    res = pipeline.cmd_consistency(copy / "manifest.jsonl", tmp_path / "c0")
    assert res.n_skipped == 10 and res.n_ok == 0
    pipeline.attach_rgb_from_silhouettes(copy / "manifest.jsonl")
    res = pipeline.cmd_consistency(copy / "manifest.jsonl", tmp_path / "c1")
    assert res.n_ok == 10
    rows, cfg = read_csv(tmp_path / "c1" / "consistency.csv")
    assert cfg["consistency"]["control_shift"] == [16, 0]
    for r in rows:
        assert float(r["matched_mean_dist_px"]) < float(r["shifted_mean_dist_px"])


def test_fit_command(dataset, tmp_path):
    _, asset_dir, data = dataset
    res = pipeline.cmd_fit(data / "manifest.jsonl", asset_dir, tmp_path / "fit")
    assert res.n_ok == 10 and res.summary["max_landmark_rms"] < 1e-6
    noisy = pipeline.cmd_fit(data / "manifest.jsonl", asset_dir, tmp_path / "noisy", noise_sigma=1e-3)
    assert noisy.summary["max_landmark_rms"] <= 3e-3
    rows, _ = read_csv(tmp_path / "noisy" / "fit.csv")
    assert all(float(r["clean_rms"]) < 3e-3 for r in rows)


def test_decode_command(dataset, tmp_path):
    _, asset_dir, data = dataset
    pipeline.cmd_decode(asset_dir, data / "params" / "000002.json", tmp_path / "m.obj")
    m = read_manifest(data / "manifest.jsonl")
    np.testing.assert_array_equal(read_obj(tmp_path / "m.obj").vertices,
                                  read_obj(m.path(m.rows[2], "mesh")).vertices)
    assert len(read_json(tmp_path / "m.landmarks.json")["points"]) == 68

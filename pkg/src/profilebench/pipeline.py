"""Batch commands: sample, render, export conditioning, evaluate, consistency, fit, stats.

Each command is a plain function returning a `RunResult`; the CLI is a thin
argparse layer over them. Per-sample work runs in an optional process pool and
is written back in id order, so outputs do not depend on the worker count.
Per-sample failures are caught, logged with a reason code, and counted.
"""

from __future__ import annotations

import functools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, defaults
from .asset_io import asset_hash, load_model_asset
from .consistency import ConsistencyConfig, ConsistencyError, consistency_check
from .formats import (csv_column, depth_to_png8, encode_normals, read_image, read_json,
                      read_mask_png, read_obj, read_pfm, write_csv, write_json, write_mask_png, write_obj,
                      write_pfm, write_rgb_png)
from .manifest import Manifest, ManifestError, read_manifest, write_manifest
from .masks import as_mask
from .metrics import (AlignmentError, BoundaryError, MetricsReport, RigidTransform,
                      boundary_chamfer, silhouette_iou, umeyama_align, vertex_errors)
from .model import Mesh, PoseParams, decode
from .raster import Camera, project_landmarks, rasterize, render_normals, vertex_visibility
from .sampling import YAW_COMPOSITION, SampleRecord, SampleSpec, sample_record, split_sizes
from .stats import StatisticsError, paired_stats
from .supervision import FitDivergedError, fit_landmarks

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("e_all", "e_vis", "e_jaw", "e_jaw_vis", "iou", "boundary_chamfer")
POSITIVE_PROMPT = (
    "photorealistic studio photograph, strict side profile of a person, head turned 90 degrees, "
    "neutral expression, eyes looking straight ahead, ear and jawline clearly visible, "
    "hair tied back, no glasses, no face mask, no hands, soft even lighting, plain background"
)
NEGATIVE_PROMPT = (
    "frontal view, three-quarter view, cartoon, illustration, painting, 3d render, "
    "low resolution, blurry, occlusion, hands on face, glasses, mask, harsh shadows, "
    "deformed face, distorted anatomy"
)


class PipelineError(RuntimeError):
    pass


@dataclass
class RunResult:
    outputs: dict = field(default_factory=dict)  # name -> path
    n_ok: int = 0
    n_failed: int = 0
    n_skipped: int = 0
    failures: list = field(default_factory=list)  # (id, reason, detail)
    summary: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 1 if self.n_failed else 0


def _config_echo(**extra) -> dict:
    return {"profilebench_version": __version__, "protocol": defaults.snapshot(), **extra}


def _map(func, items, workers: int):
    """Ordered map over an optional process pool."""
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, items, chunksize=max(1, len(items) // (4 * workers))))


@functools.lru_cache(maxsize=4)
def _load_asset(path: str):
    return load_model_asset(path)


def _record(manifest: Manifest, row: dict) -> SampleRecord:
    return SampleRecord.from_dict(read_json(manifest.path(row, "params")))


def _stem(sample_id: int) -> str:
    return f"{sample_id:06d}"


def _open_manifest(path) -> Manifest:
    try:
        return read_manifest(path)
    except (OSError, ValueError) as e:
        raise PipelineError(f"cannot read manifest {path}: {e}") from e


# -- sample -------------------------------------------------------------------------

def cmd_sample(out_dir, count: int, spec: SampleSpec | None = None, asset_path=None,
               camera: Camera | None = None) -> RunResult:
    """Draw `count` records, write one parameter file each and the manifest.

    With an asset, the SampleSpec shape/pose sizes follow the asset and its hash is
    recorded in the header.
    """
    if count <= 0:
        raise PipelineError("count must be positive; refusing to write an empty manifest")
    spec = spec or SampleSpec()
    header = {"yaw_composition": YAW_COMPOSITION, "asset_hash": None}
    if asset_path is not None:
        asset = _load_asset(str(asset_path))
        spec = SampleSpec(spec.sigma, spec.clip, spec.yaw_min, spec.yaw_max, asset.n_shape,
                          2 + 3 * (asset.n_joints - 1), spec.base_seed)
        header["asset_hash"] = asset_hash(asset)
        header["asset_name"] = asset.name
    out = Path(out_dir)
    sizes = split_sizes(count)
    rows = []
    for i in range(count):
        rec = sample_record(spec, i, sizes)
        rel = f"params/{_stem(i)}.json"
        write_json(out / rel, rec.to_dict())
        rows.append({"id": i, "seed": rec.seed, "split": rec.split, "params": rel})
    header.update(spec=spec.to_dict(), split_sizes=list(sizes),
                  camera=(camera or Camera()).to_dict(), config=_config_echo(command="sample"))
    path = write_manifest(out / "manifest.jsonl", Manifest(header, rows, out))
    return RunResult({"manifest": path}, n_ok=count, summary={"split_sizes": list(sizes)})


# -- decode -------------------------------------------------------------------------

def cmd_decode(asset_path, params_path, out_path) -> RunResult:
    """Decode one parameter file to an OBJ mesh plus a landmark JSON next to it."""
    asset = _load_asset(str(asset_path))
    rec = SampleRecord.from_dict(read_json(params_path))
    mesh, lms = decode(asset, rec.beta, rec.theta)
    out = Path(out_path)
    write_obj(out, mesh)
    lm_path = write_json(out.with_suffix(".landmarks.json"),
                         {"points": lms.points.tolist(), "labels": list(lms.labels),
                          "contour": [bool(x) for x in lms.contour_flags]})
    return RunResult({"mesh": out, "landmarks": lm_path}, n_ok=1)


# -- render -------------------------------------------------------------------------

@dataclass(frozen=True)
class _RenderJob:
    root: str
    asset: str
    camera: Camera
    vis_resolution: int
    row: dict


def _render_one(job: _RenderJob):
    try:
        asset = _load_asset(job.asset)
        root = Path(job.root)
        rec = SampleRecord.from_dict(read_json(root / job.row["params"]))
        mesh, lms = decode(asset, rec.beta, rec.theta)
        buf = rasterize(job.camera, mesh)
        cov = buf.face_id >= 0
        stem = _stem(job.row["id"])
        paths = {k: f"render/{stem}_{k}{ext}" for k, ext in (
            ("mesh", ".obj"), ("depth", ".pfm"), ("normal", ".png"), ("silhouette", ".png"),
            ("face_id", ".npy"), ("landmarks_3d", ".json"), ("landmarks_2d", ".json"),
            ("visibility", ".npy"))}
        write_obj(root / paths["mesh"], mesh)
        write_pfm(root / paths["depth"], np.where(cov, buf.depth, 0.0))
        write_rgb_png(root / paths["normal"], encode_normals(render_normals(job.camera, mesh, buf), cov))
        write_mask_png(root / paths["silhouette"], cov)
        np.save(root / paths["face_id"], buf.face_id.astype("<i4"))
        write_json(root / paths["landmarks_3d"], lms.points.tolist())
        write_json(root / paths["landmarks_2d"], project_landmarks(job.camera, lms.points).tolist())
        vis = vertex_visibility(job.camera, mesh, job.vis_resolution)
        np.save(root / paths["visibility"], vis.visible.astype(np.uint8))
        return dict(job.row, **paths, silhouette_pixels=int(cov.sum())), None
    except Exception as e:  # noqa: BLE001 - isolate per-sample failures
        return job.row, ("render_failed", f"{type(e).__name__}: {e}")


def cmd_render(manifest_path, asset_path, camera: Camera | None = None,
               vis_resolution: int = defaults.VISIBILITY_RESOLUTION, workers: int = 1) -> RunResult:
    """Render depth/normal/silhouette/face-id/landmarks/visibility for every row."""
    m = _open_manifest(manifest_path)
    asset = _load_asset(str(asset_path))
    digest = asset_hash(asset)
    m.check_asset(digest)
    camera = camera or Camera.from_dict(m.header.get("camera", {}))
    jobs = [_RenderJob(str(m.root), str(Path(asset_path).resolve()), camera, vis_resolution, r)
            for r in m.rows]
    res = RunResult()
    rows = []
    for row, err in _map(_render_one, jobs, workers):
        rows.append(row)
        if err:
            res.n_failed += 1
            res.failures.append((row["id"], *err))
            log.error("sample %s: %s (%s)", row["id"], *err)
        else:
            res.n_ok += 1
    m.rows = rows
    m.header.update(asset_hash=digest, camera=camera.to_dict(), visibility_resolution=vis_resolution,
                    config=_config_echo(command="render"))
    res.outputs["manifest"] = write_manifest(manifest_path, m)
    return res


# -- conditioning export ------------------------------------------------------------------

@dataclass(frozen=True)
class PromptConfig:
    positive: str = POSITIVE_PROMPT
    negative: str = NEGATIVE_PROMPT
    steps: int = defaults.DIFFUSION_STEPS
    guidance_scale: float = defaults.GUIDANCE_SCALE
    conditioning_scales: tuple = defaults.CONDITIONING_SCALES
    backbone: str = defaults.DIFFUSION_BACKBONE
    controlnets: tuple = defaults.CONTROLNET_MODELS
    resolution: int = defaults.INPUT_RESOLUTION


def cmd_export_conditioning(manifest_path, out_dir=None, prompt: PromptConfig = PromptConfig()) -> RunResult:
    """Write one bundle per row: depth.png, normal.png and prompt.json for an external generator."""
    m = _open_manifest(manifest_path)
    out = Path(out_dir) if out_dir else m.root / "conditioning"
    res = RunResult({"bundles": out})
    for row in m.rows:
        try:
            if not row.get("depth") or not row.get("normal"):
                missing = [k for k in ("depth", "normal") if not row.get(k)]
                raise PipelineError(f"missing {' and '.join(missing)} render")
            depth = read_pfm(m.path(row, "depth"))
            normal = read_image(m.path(row, "normal"))
            if depth.shape != normal.shape[:2]:
                raise PipelineError("depth and normal resolutions differ")
            cov = normal.any(axis=2) if normal.ndim == 3 else normal > 0
            bundle = out / _stem(row["id"])
            write_rgb_png(bundle / "depth.png", depth_to_png8(depth, cov))
            write_rgb_png(bundle / "normal.png", normal)
            write_json(bundle / "prompt.json", {
                "sample_id": row["id"], "seed": row["seed"], "prompt": prompt.positive,
                "negative_prompt": prompt.negative, "num_inference_steps": prompt.steps,
                "guidance_scale": prompt.guidance_scale,
                "controlnet_conditioning_scale": list(prompt.conditioning_scales),
                "controlnet_models": list(prompt.controlnets), "backbone": prompt.backbone,
                "conditioning_order": ["depth", "normal"], "source_resolution": list(depth.shape),
                "output_resolution": prompt.resolution, "config": _config_echo(command="export-conditioning"),
            })
            res.n_ok += 1
        except Exception as e:  # noqa: BLE001
            res.n_failed += 1
            res.failures.append((row["id"], "missing_render", str(e)))
            log.error("sample %s: %s", row["id"], e)
    return res


# -- evaluate -----------------------------------------------------------------------

def _prediction_mesh(asset, pred_dir: Path, sample_id: int) -> Mesh | None:
    stem = _stem(sample_id)
    obj, params = pred_dir / f"{stem}.obj", pred_dir / f"{stem}.json"
    if obj.exists():
        return read_obj(obj)
    if params.exists():
        d = read_json(params)
        return decode(asset, np.asarray(d["beta"], dtype=np.float64),
                      PoseParams.from_vector(d["theta"]))[0]
    return None


def evaluate_sample(asset, gt: Mesh, pred: Mesh, camera: Camera, protocol: str,
                    vis_resolution: int = defaults.VISIBILITY_RESOLUTION) -> tuple[MetricsReport, RigidTransform]:
    """Metrics for one prediction; the transform is fitted on gt-visible vertices and
    applied to the prediction only."""
    if pred.vertices.shape != gt.vertices.shape:
        raise ValueError(f"topology mismatch: {pred.vertices.shape} vs {gt.vertices.shape}")
    vis = vertex_visibility(camera, gt, vis_resolution)
    if protocol == "aligned":
        transform = umeyama_align(pred.vertices, gt.vertices, subset=vis.indices)
    elif protocol == "raw":
        transform = RigidTransform.identity()
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    report = vertex_errors(pred, gt, transform, vis, asset.jawline_indices)
    sil_gt = rasterize(camera, gt).silhouette
    sil_pred = rasterize(camera, transform.apply_mesh(pred)).silhouette
    report.iou = silhouette_iou(sil_pred, sil_gt)
    report.n_sil_gt, report.n_sil_pred = int(sil_gt.sum()), int(sil_pred.sum())
    try:
        report.boundary_chamfer = boundary_chamfer(sil_pred, sil_gt)
    except BoundaryError:
        report.boundary_chamfer = None
    return report, transform


@dataclass(frozen=True)
class _EvalJob:
    root: str
    asset: str
    pred_dir: str
    camera: Camera
    protocol: str
    vis_resolution: int
    row: dict


def _evaluate_one(job: _EvalJob):
    sid = job.row["id"]
    try:
        asset = _load_asset(job.asset)
        pred = _prediction_mesh(asset, Path(job.pred_dir), sid)
        if pred is None:
            return sid, None, ("missing_prediction", "no .obj or .json prediction")
        root = Path(job.root)
        if job.row.get("mesh"):
            gt = read_obj(root / job.row["mesh"])
        else:
            rec = SampleRecord.from_dict(read_json(root / job.row["params"]))
            gt = decode(asset, rec.beta, rec.theta)[0]
        report, _ = evaluate_sample(asset, gt, pred, job.camera, job.protocol, job.vis_resolution)
        return sid, report.to_dict(), None
    except AlignmentError as e:
        return sid, None, ("alignment_failed", str(e))
    except ValueError as e:
        return sid, None, ("invalid_prediction", str(e))
    except Exception as e:  # noqa: BLE001
        return sid, None, ("evaluate_failed", f"{type(e).__name__}: {e}")


def _aggregate(rows: list[dict]) -> dict:
    out = {}
    for c in METRIC_COLUMNS:
        vals = np.array([r[c] for r in rows if r.get(c) is not None], dtype=np.float64)
        out[c] = ({"mean": float(vals.mean()), "median": float(np.median(vals)),
                   "std": float(vals.std()), "n": int(len(vals))} if len(vals)
                  else {"mean": None, "median": None, "std": None, "n": 0})
    return out


def cmd_evaluate(manifest_path, asset_path, pred_dir, out_dir, protocol: str = "aligned",
                 resolution: int | None = None, vis_resolution: int = defaults.VISIBILITY_RESOLUTION,
                 compare_dir=None, split: str | None = None, workers: int = 1,
                 n_boot: int = defaults.BOOTSTRAP_SAMPLES, seed: int = 0) -> RunResult:
    """Per-sample metrics CSV plus summary.json; optionally a paired comparison against
    a second prediction set on the samples both evaluate successfully."""
    if protocol not in ("aligned", "raw"):
        raise PipelineError(f"unknown protocol {protocol!r} (use aligned or raw)")
    m = _open_manifest(manifest_path)
    asset = _load_asset(str(asset_path))
    m.check_asset(asset_hash(asset))
    camera = Camera.from_dict(m.header.get("camera", {}))
    if resolution:
        camera = camera.at_resolution(resolution)
    rows = [r for r in m.rows if split is None or r.get("split") == split]
    out = Path(out_dir)
    res = RunResult()
    config = _config_echo(command="evaluate", protocol=protocol, camera=camera.to_dict(),
                          visibility_resolution=vis_resolution, split=split,
                          asset_hash=asset_hash(asset), predictions=str(pred_dir))

    def run(pdir):
        jobs = [_EvalJob(str(m.root), str(Path(asset_path).resolve()), str(pdir), camera, protocol,
                         vis_resolution, r) for r in rows]
        return _map(_evaluate_one, jobs, workers)

    ok_rows, per_id = [], {}
    for sid, metrics, err in run(pred_dir):
        if err:
            res.failures.append((sid, *err))
            if err[0] == "missing_prediction":
                res.n_skipped += 1
            else:
                res.n_failed += 1
            log.warning("sample %s: %s (%s)", sid, *err)
            continue
        res.n_ok += 1
        ok_rows.append(dict(metrics, id=sid))
        per_id[sid] = metrics
    columns = ["id", *METRIC_COLUMNS, "n_all", "n_vis", "n_jaw", "n_jaw_vis", "n_sil_gt", "n_sil_pred"]
    res.outputs["metrics"] = write_csv(out / "metrics.csv", ok_rows, columns, config)
    summary = {"config": config, "n_ok": res.n_ok, "n_failed": res.n_failed,
               "n_missing": res.n_skipped,
               "excluded": [{"id": i, "reason": r, "detail": d} for i, r, d in res.failures],
               "metrics": _aggregate(ok_rows)}
    if compare_dir is not None:
        other = {sid: mtr for sid, mtr, err in run(compare_dir) if not err}
        common = sorted(set(per_id) & set(other))
        paired = {"compare": str(compare_dir), "n_common": len(common)}
        for c in METRIC_COLUMNS:
            pairs = [(per_id[i][c], other[i][c]) for i in common
                     if per_id[i][c] is not None and other[i][c] is not None]
            try:
                a, b = np.array(pairs, dtype=np.float64).reshape(-1, 2).T
                paired[c] = paired_stats(a, b, n_boot=n_boot, seed=seed).to_dict()
            except StatisticsError as e:
                paired[c] = {"error": str(e)}
        summary["paired"] = paired
    res.outputs["summary"] = write_json(out / "summary.json", summary)
    res.summary = summary
    return res


# -- consistency --------------------------------------------------------------------

def cmd_consistency(manifest_path, out_dir, config: ConsistencyConfig = ConsistencyConfig(),
                    split: str | None = None) -> RunResult:
    """Matched vs shifted-control edge agreement for every row that has an RGB image."""
    m = _open_manifest(manifest_path)
    out = Path(out_dir)
    res = RunResult()
    rows = []
    for row in m.rows:
        if split is not None and row.get("split") != split:
            continue
        if not row.get("rgb"):
            res.n_skipped += 1
            continue
        try:
            rep = consistency_check(read_image(m.path(row, "rgb")),
                                    read_mask_png(m.path(row, "silhouette")), config)
        except (ConsistencyError, ManifestError, OSError, ValueError) as e:
            res.n_failed += 1
            res.failures.append((row["id"], "invalid_input", str(e)))
            log.error("sample %s: %s", row["id"], e)
            continue
        res.n_ok += 1
        rows.append(dict(rep.row(), id=row["id"]))
    echo = _config_echo(command="consistency", consistency=config.to_dict())
    columns = ["id"] + [f"{s}_{k}" for s in ("matched", "shifted") for k in
                        ("mean_dist_px", "sym_chamfer_px", "coverage", "n_boundary", "n_edges", "reason")]
    res.outputs["report"] = write_csv(out / "consistency.csv", rows, columns, echo)
    agg = {}
    for s in ("matched", "shifted"):
        valid = [r for r in rows if not r[f"{s}_reason"]]
        agg[s] = {k: (float(np.mean([r[f"{s}_{k}"] for r in valid])) if valid else None)
                  for k in ("mean_dist_px", "sym_chamfer_px", "coverage")}
        agg[s]["n_valid"] = len(valid)
        agg[s]["n_no_edges"] = len(rows) - len(valid)
    res.summary = {"config": echo, "n_ok": res.n_ok, "n_failed": res.n_failed,
                   "n_skipped_no_rgb": res.n_skipped, "aggregate": agg,
                   "failures": [{"id": i, "reason": r, "detail": d} for i, r, d in res.failures]}
    res.outputs["summary"] = write_json(out / "consistency_summary.json", res.summary)
    return res


# -- fit ----------------------------------------------------------------------------

def cmd_fit(manifest_path, asset_path, out_dir, regularization: float = 0.0,
            noise_sigma: float = 0.0, seed: int = 0, max_iter: int = 200) -> RunResult:
    """Round trip: decode each row's parameters, fit landmarks from a zero start, report RMS.

    With `noise_sigma` > 0 the target landmarks get isotropic Gaussian noise
    (seeded per sample id); RMS is reported against both the noisy target and
    the clean landmarks.
    """
    m = _open_manifest(manifest_path)
    asset = _load_asset(str(asset_path))
    m.check_asset(asset_hash(asset))
    out = Path(out_dir)
    res = RunResult()
    rows = []
    for row in m.rows:
        try:
            rec = _record(m, row)
            _, lms = decode(asset, rec.beta, rec.theta)
            target = lms.points
            if noise_sigma > 0:
                rng = np.random.default_rng([seed, row["id"]])
                target = target + noise_sigma * rng.standard_normal(target.shape)
            fit = fit_landmarks(asset, target, None, regularization, max_iter=max_iter)
            fitted = decode(asset, fit.beta, fit.theta)[1].points
            clean = float(np.sqrt(np.mean(np.sum((fitted - lms.points) ** 2, axis=1))))
            write_json(out / "fits" / f"{_stem(row['id'])}.json", {
                "id": row["id"], "beta": fit.beta.tolist(), "theta": fit.theta.as_vector().tolist(),
                "landmark_rms": fit.landmark_rms, "clean_rms": clean, "iterations": fit.iterations,
                "reason": fit.reason, "history": fit.history})
            rows.append({"id": row["id"], "landmark_rms": fit.landmark_rms, "clean_rms": clean,
                         "iterations": fit.iterations, "converged": fit.converged, "reason": fit.reason})
            res.n_ok += 1
        except (FitDivergedError, ValueError, OSError, ManifestError) as e:
            res.n_failed += 1
            res.failures.append((row["id"], "fit_failed", str(e)))
            log.error("sample %s: %s", row["id"], e)
    echo = _config_echo(command="fit", regularization=regularization, noise_sigma=noise_sigma,
                        seed=seed, max_iter=max_iter)
    res.outputs["report"] = write_csv(out / "fit.csv", rows,
                                      ["id", "landmark_rms", "clean_rms", "iterations", "converged", "reason"], echo)
    rms = np.array([r["landmark_rms"] for r in rows])
    res.summary = {"config": echo, "n_ok": res.n_ok, "n_failed": res.n_failed,
                   "max_landmark_rms": float(rms.max()) if len(rms) else None,
                   "median_landmark_rms": float(np.median(rms)) if len(rms) else None}
    res.outputs["summary"] = write_json(out / "fit_summary.json", res.summary)
    return res


# -- stats --------------------------------------------------------------------------

def cmd_stats(csv_a, csv_b, column: str, out_path=None, n_boot: int = defaults.BOOTSTRAP_SAMPLES,
              level: float = defaults.CONFIDENCE_LEVEL, seed: int = 0) -> RunResult:
    """Paired bootstrap CIs and Wilcoxon p on one metric column of two reports (rows paired by order)."""
    a, b = csv_column(csv_a, column), csv_column(csv_b, column)
    if len(a) != len(b):
        raise PipelineError(f"reports have {len(a)} and {len(b)} rows; pairing needs equal lengths")
    keep = np.isfinite(a) & np.isfinite(b)
    try:
        st = paired_stats(a[keep], b[keep], n_boot=n_boot, level=level, seed=seed)
    except StatisticsError as e:
        raise PipelineError(f"statistics precondition failed: {e}") from e
    summary = {"column": column, "a": str(csv_a), "b": str(csv_b), "n_dropped": int((~keep).sum()),
               **st.to_dict(), "config": _config_echo(command="stats")}
    res = RunResult(n_ok=1, summary=summary)
    if out_path:
        res.outputs["summary"] = write_json(out_path, summary)
    return res


def silhouette_rgb(mask) -> np.ndarray:
    """White-on-black RGB rendering of a silhouette (self-consistent consistency fixture)."""
    m = as_mask(mask)
    return np.repeat(np.where(m, 255, 0).astype(np.uint8)[..., None], 3, axis=2)


def attach_rgb_from_silhouettes(manifest_path) -> RunResult:
    """Write a silhouette-derived RGB per rendered row and record it as the row's rgb path."""
    m = _open_manifest(manifest_path)
    res = RunResult()
    for row in m.rows:
        if not row.get("silhouette"):
            res.n_skipped += 1
            continue
        rel = f"render/{_stem(row['id'])}_rgb.png"
        write_rgb_png(m.root / rel, silhouette_rgb(read_mask_png(m.path(row, "silhouette"))))
        row["rgb"] = rel
        res.n_ok += 1
    res.outputs["manifest"] = write_manifest(manifest_path, m)
    return res


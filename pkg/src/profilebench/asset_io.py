"""Model asset container: ``model.json`` plus one raw little-endian blob per array.

Layout of a container directory::

    model.json               metadata, array table, joint tree, jawline, landmarks
    template_vertices.bin    (N, 3)    float32 or float64
    faces.bin                (F, 3)    uint32
    shape_basis.bin          (S, N, 3) float
    joint_regressor.bin      (J, N)    float
    skin_weights.bin         (N, J)    float

Blobs are row-major (C order), little-endian, no header. Float arrays are
written as float32 unless the in-memory array is float64, in which case the
dtype is kept so that a save/load round trip is bit-identical; the dtype of
every blob is declared in ``model.json``.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .model import ModelAsset, ModelAssetError

FORMAT = "profilebench-asset"
FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8", "uint32": "<u4"}
_FLOAT_ARRAYS = ("template_vertices", "shape_basis", "joint_regressor", "skin_weights")


def _float_tag(arr: np.ndarray, float_dtype: str | None) -> str:
    if float_dtype is not None:
        return float_dtype
    return "float64" if arr.dtype == np.float64 else "float32"


def _metadata(asset: ModelAsset, float_dtype: str | None = None) -> dict:
    arrays = {}
    for name in _FLOAT_ARRAYS:
        arr = getattr(asset, name)
        arrays[name] = {"file": f"{name}.bin", "dtype": _float_tag(arr, float_dtype),
                        "shape": list(arr.shape)}
    arrays["faces"] = {"file": "faces.bin", "dtype": "uint32",
                       "shape": list(asset.faces.shape)}
    landmarks = [
        {"label": label, "face": int(f), "bary": [float(x) for x in b], "contour": bool(c)}
        for label, f, b, c in zip(asset.landmark_labels, asset.landmark_faces,
                                  asset.landmark_bary, asset.contour_flags)
    ]
    return {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "name": asset.name,
        "version": asset.version,
        "byte_order": "little",
        "layout": "row-major",
        "n_vertices": asset.n_vertices,
        "n_faces": asset.n_faces,
        "n_shape": asset.n_shape,
        "n_joints": asset.n_joints,
        "n_landmarks": asset.n_landmarks,
        "arrays": arrays,
        "joint_parents": [int(p) for p in asset.joint_parents],
        "joint_names": list(asset.joint_names),
        "jawline_indices": [int(i) for i in asset.jawline_indices],
        "landmarks": landmarks,
    }


def save_model_asset(asset: ModelAsset, path, float_dtype: str | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = _metadata(asset, float_dtype)
    for name, entry in meta["arrays"].items():
        arr = np.ascontiguousarray(getattr(asset, name), dtype=_DTYPES[entry["dtype"]])
        (path / entry["file"]).write_bytes(arr.tobytes(order="C"))
    (path / "model.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
    return path


def load_model_asset(path) -> ModelAsset:
    path = Path(path)
    meta_path = path / "model.json" if path.is_dir() else path
    if not meta_path.exists():
        raise FileNotFoundError(f"no model asset at {path}")
    root = meta_path.parent
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta.get("format") != FORMAT:
        raise ModelAssetError(f"{meta_path}: not a {FORMAT} container")
    arrays = {}
    for name, entry in meta["arrays"].items():
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise ModelAssetError(f"{name}: unsupported dtype {entry['dtype']!r}")
        blob = root / entry["file"]
        if not blob.exists():
            raise FileNotFoundError(f"{name}: missing blob {blob}")
        raw = np.frombuffer(blob.read_bytes(), dtype=dtype)
        shape = tuple(entry["shape"])
        if raw.size != int(np.prod(shape)):
            raise ModelAssetError(
                f"{name}: blob holds {raw.size} values, shape {shape} needs {int(np.prod(shape))}")
        arr = raw.reshape(shape)
        arrays[name] = arr.astype(np.int64) if entry["dtype"] == "uint32" else arr.astype(arr.dtype.newbyteorder("="))
    lms = meta.get("landmarks", [])
    return ModelAsset(
        template_vertices=arrays["template_vertices"],
        faces=arrays["faces"],
        shape_basis=arrays["shape_basis"],
        joint_regressor=arrays["joint_regressor"],
        joint_parents=np.array(meta["joint_parents"], dtype=np.int64),
        skin_weights=arrays["skin_weights"],
        landmark_faces=np.array([lm["face"] for lm in lms], dtype=np.int64),
        landmark_bary=np.array([lm["bary"] for lm in lms], dtype=np.float64).reshape(-1, 3),
        jawline_indices=np.array(meta.get("jawline_indices", []), dtype=np.int64),
        landmark_labels=tuple(lm["label"] for lm in lms),
        contour_flags=np.array([lm["contour"] for lm in lms], dtype=bool),
        name=meta.get("name", "unnamed"),
        version=str(meta.get("version", "0")),
        joint_names=tuple(meta.get("joint_names", ())),
    )


def asset_hash(asset: ModelAsset) -> str:
    """SHA-256 over the canonical metadata and array bytes (dtype as stored)."""
    h = hashlib.sha256()
    meta = _metadata(asset)
    h.update(json.dumps(meta, sort_keys=True).encode())
    for name in sorted(meta["arrays"]):
        entry = meta["arrays"][name]
        arr = np.ascontiguousarray(getattr(asset, name), dtype=_DTYPES[entry["dtype"]])
        h.update(arr.tobytes())
    return h.hexdigest()

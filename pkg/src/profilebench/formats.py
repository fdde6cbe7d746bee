"""On-disk formats: PFM depth, PNG masks/normals/images, OBJ meshes, JSON, CSV.

Layouts are documented in docs/formats.md.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
from PIL import Image

from .model import Mesh


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


# -- PFM -------------------------------------------------------------------------

def write_pfm(path, image) -> Path:
    """Single-channel ("Pf") or RGB ("PF") float32 PFM, little-endian, bottom row first."""
    img = np.asarray(image, dtype="<f4")
    if img.ndim == 2:
        tag = b"Pf"
    elif img.ndim == 3 and img.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValueError(f"PFM needs (H, W) or (H, W, 3), got {img.shape}")
    h, w = img.shape[:2]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        f.write(np.ascontiguousarray(img[::-1]).tobytes())
    return path


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        tag = f.readline().strip()
        if tag not in (b"Pf", b"PF"):
            raise ValueError(f"{path}: not a PFM file")
        w, h = (int(x) for x in f.readline().split())
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        chans = 3 if tag == b"PF" else 1
        data = np.frombuffer(f.read(), dtype=dtype)
    if data.size != w * h * chans:
        raise ValueError(f"{path}: expected {w * h * chans} values, found {data.size}")
    shape = (h, w, 3) if chans == 3 else (h, w)
    return data.reshape(shape)[::-1].astype(np.float32)


# -- PNG -------------------------------------------------------------------------

def write_mask_png(path, mask) -> Path:
    """8-bit grayscale: 255 inside, 0 outside."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.where(np.asarray(mask, bool), 255, 0).astype(np.uint8), "L").save(path)
    return path


def read_mask_png(path) -> np.ndarray:
    img = np.asarray(Image.open(path))
    if img.ndim == 3:
        img = img[..., :3].max(axis=2)
    return img > 127


def encode_normals(normals, covered=None) -> np.ndarray:
    """Unit normals -> uint8 RGB via round((n + 1) / 2 * 255); uncovered pixels are 0."""
    n = np.asarray(normals, dtype=np.float64)
    rgb = np.rint((np.clip(n, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)
    if covered is not None:
        rgb[~np.asarray(covered, bool)] = 0
    return rgb


def decode_normals(rgb) -> np.ndarray:
    n = np.asarray(rgb, dtype=np.float64)[..., :3] / 127.5 - 1.0
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)


def write_rgb_png(path, rgb) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(rgb)
    if arr.dtype != np.uint8:
        arr = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr, "L" if arr.ndim == 2 else "RGB").save(path)
    return path


def read_image(path) -> np.ndarray:
    """uint8 array, (H, W) or (H, W, 3); alpha is dropped."""
    img = Image.open(path)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    return np.asarray(img)


def depth_to_png8(depth, covered) -> np.ndarray:
    """Depth as 8-bit near-bright image normalised over covered pixels; background 0."""
    d = np.asarray(depth, dtype=np.float64)
    cov = np.asarray(covered, bool)
    out = np.zeros(d.shape, dtype=np.uint8)
    if not cov.any():
        return out
    lo, hi = d[cov].min(), d[cov].max()
    span = hi - lo if hi > lo else 1.0
    # covered pixels map to [255, 32] so the farthest surface stays distinct from background
    out[cov] = np.rint(255.0 - (d[cov] - lo) / span * 223.0).astype(np.uint8)
    return out


# -- OBJ -------------------------------------------------------------------------

def write_obj(path, mesh: Mesh) -> Path:
    """Vertices with 17 significant digits (lossless float64), 1-based triangle faces."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in np.asarray(mesh.vertices, np.float64)]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in np.asarray(mesh.faces, np.int64)]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_obj(path) -> Mesh:
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
            # fan-triangulate polygons
            faces.extend([idx[0], idx[k], idx[k + 1]] for k in range(1, len(idx) - 1))
    return Mesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                np.array(faces, dtype=np.int64).reshape(-1, 3))


# -- CSV -------------------------------------------------------------------------

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "inf" if math.isinf(v) and v > 0 else repr(v)
    return v


def write_csv(path, rows: list[dict], columns: list[str], config: dict | None = None) -> Path:
    """CSV preceded by '# key: json-value' lines echoing the run configuration."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        for k, v in sorted((config or {}).items()):
            f.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])
    return path


def read_csv(path) -> tuple[list[dict], dict]:
    """Rows (string values) and the echoed config."""
    config, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            config[key] = json.loads(val)
        elif line:
            body.append(line)
    return list(csv.DictReader(body)), config


def csv_column(path, column: str) -> np.ndarray:
    """Float column; empty cells become NaN."""
    rows, _ = read_csv(path)
    if rows and column not in rows[0]:
        raise KeyError(f"{path}: no column {column!r}")
    return np.array([float(r[column]) if r[column] != "" else np.nan for r in rows])

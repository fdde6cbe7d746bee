"""JSONL dataset manifests: one header line, then one JSON object per sample."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath

FORMAT_VERSION = 1
KIND = "profilebench-manifest"
# render/geometry keys a row may reference, each a path relative to the manifest root
PATH_KEYS = ("params", "mesh", "depth", "normal", "silhouette", "face_id", "landmarks_3d",
             "landmarks_2d", "visibility", "rgb")


class ManifestError(ValueError):
    pass


@dataclass
class Manifest:
    header: dict
    rows: list = field(default_factory=list)
    root: Path = Path(".")

    def path(self, row: dict, key: str) -> Path:
        rel = row.get(key)
        if not rel:
            raise ManifestError(f"sample {row.get('id')}: no {key!r} path")
        return self.root / rel

    def validate(self, check_files: bool = False) -> None:
        ids = [r.get("id") for r in self.rows]
        if ids != list(range(len(ids))):
            raise ManifestError("manifest ids must be unique and dense from 0 in order")
        for r in self.rows:
            for k in PATH_KEYS:
                rel = r.get(k)
                if rel is None:
                    continue
                p = PurePosixPath(rel)
                if p.is_absolute() or ".." in p.parts:
                    raise ManifestError(f"sample {r['id']}: {k} path {rel!r} must be relative to the root")
                if check_files and not (self.root / rel).exists():
                    raise ManifestError(f"sample {r['id']}: {k} file {rel!r} does not exist")

    def check_asset(self, digest: str) -> None:
        expected = self.header.get("asset_hash")
        if expected and expected != digest:
            raise ManifestError(f"asset hash {digest[:12]} does not match manifest {expected[:12]}")


def write_manifest(path, manifest: Manifest) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = dict(manifest.header, kind=KIND, format_version=FORMAT_VERSION)
    lines = [json.dumps({"header": header}, sort_keys=True)]
    lines += [json.dumps(r, sort_keys=True) for r in manifest.rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest(path) -> Manifest:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ManifestError(f"{path}: empty file")
    first = json.loads(lines[0])
    header = first.get("header") if isinstance(first, dict) else None
    if not header or header.get("kind") != KIND:
        raise ManifestError(f"{path}: missing manifest header line")
    if header.get("format_version") != FORMAT_VERSION:
        raise ManifestError(f"{path}: unsupported format version {header.get('format_version')}")
    m = Manifest(header, [json.loads(ln) for ln in lines[1:]], path.parent)
    m.validate()
    return m

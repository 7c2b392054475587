"""Dataset manifests and scene loading.

A manifest is a JSON document::

    {
      "split": "train",
      "labels": "labels.csv",
      "scenes": [
        {"scene_id": "s0",
         "channels": {"vv": "s0/vv.json", "vh": "s0/vh.json", "bathymetry": "..."},
         "shore_distance": "s0/shore.json"}
      ]
    }

Relative paths resolve against the manifest's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from ..core import Scene, canonical_auxiliary
from ..errors import ChannelDimensionMismatch, SceneIOError, SchemaError
from .raster import RasterInfo, read_raster, read_raster_info

SPLITS = ("train", "valid")


@dataclass(frozen=True)
class SceneEntry:
    scene_id: str
    channels: Mapping[str, Path]
    shore_distance: Optional[Path] = None

    @property
    def auxiliary_paths(self) -> dict[str, Path]:
        return {k: v for k, v in self.channels.items() if k not in ("vv", "vh")}


@dataclass(frozen=True)
class DatasetManifest:
    scenes: tuple[SceneEntry, ...]
    labels: Optional[Path] = None
    split: str = "train"
    root: Path = field(default=Path("."))

    def __post_init__(self):
        ids = [s.scene_id for s in self.scenes]
        if len(set(ids)) != len(ids):
            raise SchemaError("manifest scene_ids are not unique")
        if self.split not in SPLITS:
            raise SchemaError(f"unknown split {self.split!r}")

    def entry(self, scene_id: str) -> SceneEntry:
        for s in self.scenes:
            if s.scene_id == scene_id:
                return s
        raise KeyError(scene_id)


def _resolve(root: Path, value: str | Path) -> Path:
    p = Path(value)
    return p if p.is_absolute() else root / p


def load_manifest(path: str | Path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise SceneIOError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    root = path.parent
    scenes = []
    try:
        for item in doc["scenes"]:
            channels = {}
            for name, p in item["channels"].items():
                key = name if name in ("vv", "vh") else canonical_auxiliary(name)
                channels[key] = _resolve(root, p)
            if "vv" not in channels or "vh" not in channels:
                raise SchemaError(f"scene {item['scene_id']}: vv and vh channels are required")
            shore = item.get("shore_distance")
            scenes.append(
                SceneEntry(
                    scene_id=str(item["scene_id"]),
                    channels=channels,
                    shore_distance=_resolve(root, shore) if shore else None,
                )
            )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: malformed manifest ({exc!r})") from exc
    labels = doc.get("labels")
    manifest = DatasetManifest(
        scenes=tuple(scenes),
        labels=_resolve(root, labels) if labels else None,
        split=doc.get("split", "train"),
        root=root,
    )
    if check_files:
        for entry in manifest.scenes:
            for p in [*entry.channels.values(), entry.shore_distance]:
                if p is not None and not p.is_file():
                    raise SceneIOError(f"scene {entry.scene_id}: missing file {p}")
        if manifest.labels is not None and not manifest.labels.is_file():
            raise SceneIOError(f"labels file not found: {manifest.labels}")
    return manifest


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    root = path.parent

    def rel(p: Path) -> str:
        try:
            return Path(p).relative_to(root).as_posix()
        except ValueError:
            return str(p)

    doc = {
        "split": manifest.split,
        "labels": rel(manifest.labels) if manifest.labels else None,
        "scenes": [
            {
                "scene_id": s.scene_id,
                "channels": {k: rel(v) for k, v in s.channels.items()},
                "shore_distance": rel(s.shore_distance) if s.shore_distance else None,
            }
            for s in manifest.scenes
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def load_scene(entry: SceneEntry) -> Scene:
    """Read every channel listed in ``entry``.

    Auxiliary channels absent from the entry are simply absent from the
    scene; VV/VH dimension disagreement raises ChannelDimensionMismatch.
    """
    vv = read_raster(entry.channels["vv"])
    vh = read_raster(entry.channels["vh"])
    if vv.shape != vh.shape:
        raise ChannelDimensionMismatch(
            f"scene {entry.scene_id}: VV {vv.shape} != VH {vh.shape}"
        )
    aux = {name: read_raster(p) for name, p in entry.auxiliary_paths.items()}
    shore = read_raster(entry.shore_distance) if entry.shore_distance else None
    return Scene(entry.scene_id, vv, vh, aux, shore)


def scene_geometry(entry: SceneEntry) -> RasterInfo:
    """Header of the VV channel, without reading pixel data."""
    return read_raster_info(entry.channels["vv"])

"""Deterministic synthetic SAR scenes with known point targets."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..core import (
    AUXILIARY_NAMES,
    ClassLabel,
    Confidence,
    DEFAULT_NODATA,
    DEFAULT_PIXEL_SPACING_M,
    LabelRecord,
    Raster,
    Scene,
)
from ..errors import SpecError
from .manifest import DatasetManifest, SceneEntry, write_manifest
from .raster import write_raster
from .tables import write_labels

_MAX_PLACEMENT_TRIES = 200


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic scene.

    Background speckle is ``noise_level * Beta(4, 4)``, so ``noise_level`` is a
    hard ceiling on background pixels. Targets are square blocks of side
    ``target_size`` at roughly ``target_intensity``. The shoreline runs along
    column 0 and the shore-distance raster grows linearly eastward; the first
    ``n_shore_targets`` targets are placed within ``shore_band_km`` of it.
    ``flat_blocks`` lists (row, col, height, width) regions of VV forced to a
    constant, to exercise degenerate-patch handling.
    """

    width: int = 1600
    height: int = 1600
    n_targets: int = 10
    target_intensity: float = 1.0
    noise_level: float = 0.2
    shore_band_km: float = 2.0
    n_shore_targets: int = 0
    rng_seed: int = 0
    scene_id: str = "synth0000"
    pixel_spacing_m: float = DEFAULT_PIXEL_SPACING_M
    target_size: int = 5
    min_separation_px: int = 60
    class_mix: tuple[float, float, float] = (1.0, 0.0, 0.0)
    confidence_mix: tuple[float, float, float] = (1.0, 0.0, 0.0)
    with_auxiliaries: bool = True
    aux_factor: int = 8
    flat_blocks: tuple[tuple[int, int, int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.n_targets < 0:
            raise SpecError("n_targets must be >= 0")
        if self.width <= 0 or self.height <= 0:
            raise SpecError("scene dimensions must be positive")
        if self.target_size < 1 or self.target_size % 2 == 0:
            raise SpecError("target_size must be a positive odd number")
        if self.n_shore_targets > self.n_targets:
            raise SpecError("n_shore_targets exceeds n_targets")
        if self.noise_level < 0 or self.aux_factor < 1:
            raise SpecError("noise_level must be >= 0 and aux_factor >= 1")
        for mix in (self.class_mix, self.confidence_mix):
            if len(mix) != 3 or min(mix) < 0 or sum(mix) <= 0:
                raise SpecError(f"bad mixture weights {mix}")


def _place_targets(spec: SynthSpec, rng: np.random.Generator) -> list[tuple[int, int]]:
    r = spec.target_size // 2
    if spec.n_targets and (spec.height < 2 * r + 1 or spec.width < 2 * r + 1):
        raise SpecError("scene too small for a target footprint")
    shore_cols = int(spec.shore_band_km * 1000.0 / spec.pixel_spacing_m)
    placed: list[tuple[int, int]] = []
    min_d2 = spec.min_separation_px ** 2
    for i in range(spec.n_targets):
        col_hi = spec.width - r
        if i < spec.n_shore_targets:
            col_hi = min(col_hi, shore_cols + 1)
            if col_hi <= r:
                raise SpecError("shore band narrower than a target footprint")
        for _ in range(_MAX_PLACEMENT_TRIES):
            row = int(rng.integers(r, spec.height - r))
            col = int(rng.integers(r, col_hi))
            if all((row - a) ** 2 + (col - b) ** 2 >= min_d2 for a, b in placed):
                placed.append((row, col))
                break
        else:
            raise SpecError(
                f"could not place target {i} with separation {spec.min_separation_px}px"
            )
    return placed


def _flags(label: ClassLabel) -> tuple[bool, Optional[bool]]:
    if label is ClassLabel.NON_VESSEL:
        return False, None
    return True, label is ClassLabel.FISHING


def _auxiliaries(spec: SynthSpec, rng: np.random.Generator) -> dict[str, Raster]:
    ah = max(1, -(-spec.height // spec.aux_factor))
    aw = max(1, -(-spec.width // spec.aux_factor))
    spacing = spec.pixel_spacing_m * spec.aux_factor
    rows, cols = np.mgrid[0:ah, 0:aw].astype(np.float64)
    grids = {
        "bathymetry": -5.0 - 0.5 * cols * spec.aux_factor * spec.pixel_spacing_m / 100.0,
        "wind_speed": 6.0 + rng.normal(0.0, 1.0, (ah, aw)),
        "wind_direction": (180.0 + 20.0 * np.sin(rows / 7.0) + rng.normal(0, 5, (ah, aw))) % 360,
        "wind_quality": rng.integers(0, 3, (ah, aw)).astype(np.float64),
        "land_ice_mask": np.zeros((ah, aw)),
    }
    return {name: Raster(grids[name].astype(np.float32), spacing) for name in AUXILIARY_NAMES}


def synth_scene(spec: SynthSpec) -> tuple[Scene, list[LabelRecord]]:
    """Generate a scene and its ground truth; a pure function of ``spec``."""
    rng = np.random.default_rng(spec.rng_seed)
    centers = _place_targets(spec, rng)

    shape = (spec.height, spec.width)
    vv = spec.noise_level * rng.beta(4.0, 4.0, shape)
    vh = 0.5 * spec.noise_level * rng.beta(4.0, 4.0, shape)
    r = spec.target_size // 2
    for row, col in centers:
        block = (slice(row - r, row + r + 1), slice(col - r, col + r + 1))
        gain = spec.target_intensity * (0.9 + 0.1 * rng.random((2 * r + 1, 2 * r + 1)))
        vv[block] = np.maximum(vv[block], gain)
        vh[block] = np.maximum(vh[block], 0.6 * gain)
    for (br, bc, bh, bw) in spec.flat_blocks:
        vv[br:br + bh, bc:bc + bw] = 0.5 * spec.noise_level

    cols = np.arange(spec.width, dtype=np.float64)
    shore_km = np.broadcast_to(cols * spec.pixel_spacing_m / 1000.0, shape)

    classes = rng.choice(3, size=len(centers), p=np.asarray(spec.class_mix) / sum(spec.class_mix))
    tiers = rng.choice(
        3, size=len(centers), p=np.asarray(spec.confidence_mix) / sum(spec.confidence_mix)
    )
    tier_order = (Confidence.HIGH, Confidence.MEDIUM, Confidence.LOW)
    labels = []
    for i, ((row, col), cls, tier) in enumerate(zip(centers, classes, tiers)):
        cls = ClassLabel(int(cls))
        is_vessel, is_fishing = _flags(cls)
        labels.append(
            LabelRecord(
                detect_id=f"{spec.scene_id}_{i:04d}",
                scene_id=spec.scene_id,
                row=row,
                col=col,
                confidence=tier_order[int(tier)],
                is_vessel=is_vessel,
                is_fishing=is_fishing,
                vessel_length_m=float(spec.target_size * spec.pixel_spacing_m) if is_vessel else None,
                distance_from_shore_km=float(shore_km[row, col]),
                source="synthetic",
            )
        )

    scene = Scene(
        scene_id=spec.scene_id,
        vv=Raster(vv.astype(np.float32), spec.pixel_spacing_m, DEFAULT_NODATA),
        vh=Raster(vh.astype(np.float32), spec.pixel_spacing_m, DEFAULT_NODATA),
        auxiliaries=_auxiliaries(spec, rng) if spec.with_auxiliaries else {},
        shore_distance=Raster(shore_km.astype(np.float32), spec.pixel_spacing_m),
    )
    return scene, labels


def write_scene(scene: Scene, directory: str | Path, fmt: str = "raw") -> SceneEntry:
    """Write every channel of ``scene`` under ``directory/scene_id``."""
    suffix = {"raw": ".json", "tiff": ".tif"}.get(fmt)
    if suffix is None:
        raise SpecError(f"unknown raster format {fmt!r}")
    base = Path(directory) / scene.scene_id
    channels = {
        "vv": write_raster(scene.vv, base / f"vv{suffix}"),
        "vh": write_raster(scene.vh, base / f"vh{suffix}"),
    }
    for name, raster in scene.auxiliaries.items():
        channels[name] = write_raster(raster, base / f"{name}{suffix}")
    shore = None
    if scene.shore_distance is not None:
        shore = write_raster(scene.shore_distance, base / f"shore_distance{suffix}")
    return SceneEntry(scene.scene_id, channels, shore)


def write_dataset(
    specs: Sequence[SynthSpec], directory: str | Path, fmt: str = "raw", split: str = "train"
) -> Path:
    """Synthesize scenes, write them with a labels.csv and manifest.json.

    Returns the manifest path.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries, labels = [], []
    for spec in specs:
        scene, scene_labels = synth_scene(spec)
        entries.append(write_scene(scene, directory, fmt))
        labels.extend(scene_labels)
    labels_path = directory / "labels.csv"
    write_labels(labels, labels_path)
    manifest_path = directory / "manifest.json"
    write_manifest(
        DatasetManifest(tuple(entries), labels_path, split, directory), manifest_path
    )
    return manifest_path

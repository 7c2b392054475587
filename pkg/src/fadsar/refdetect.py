"""Threshold + connected-components reference detector.

Exists so the pipeline and the scorer can run end to end on synthetic data
without a trained model. It only looks at channel 1 (VV), so its geometry
does not depend on the fusion method.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .core import ClassLabel, DetectionRecord, Patch, PatchRef, Scene
from .errors import ConfigError
from .preprocess import FusionMethod, TilingPolicy, preprocess_scene

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class ClassRule(str, enum.Enum):
    ALL_FISHING = "all_fishing"
    ALL_NON_FISHING = "all_non_fishing"
    ALL_NON_VESSEL = "all_non_vessel"

    def flags(self) -> tuple[bool, bool]:
        return {
            ClassRule.ALL_FISHING: (True, True),
            ClassRule.ALL_NON_FISHING: (True, False),
            ClassRule.ALL_NON_VESSEL: (False, False),
        }[self]

    @property
    def label(self) -> ClassLabel:
        return ClassLabel[self.value[len("all_"):].upper()]


@dataclass(frozen=True)
class RefDetectConfig:
    k_sigma: float = 4.0
    min_area_px: int = 3
    merge_radius_m: float = 100.0
    class_rule: ClassRule = ClassRule.ALL_FISHING

    def __post_init__(self):
        object.__setattr__(self, "class_rule", ClassRule(self.class_rule))
        if not self.k_sigma > 0:
            raise ConfigError("k_sigma must be > 0")
        if self.min_area_px < 1:
            raise ConfigError("min_area_px must be >= 1")
        if self.merge_radius_m < 0:
            raise ConfigError("merge_radius_m must be >= 0")


@dataclass(frozen=True, order=True)
class Blob:
    """A component in patch-local coordinates (float centroid)."""

    row: float
    col: float
    area: int
    mean_intensity: float


def detect_patch(patch: Patch, config: RefDetectConfig = RefDetectConfig()) -> list[Blob]:
    """Threshold channel 1 at mean + k*std of its valid cells and return the
    8-connected components of at least ``min_area_px`` pixels."""
    ch = patch.channels[0].astype(np.float64)
    valid = patch.valid_mask
    if not valid.any():
        return []
    v = ch[valid]
    threshold = v.mean() + config.k_sigma * v.std()
    hot = (ch > threshold) & valid
    labels, n = ndimage.label(hot, structure=_EIGHT_CONNECTED)
    if n == 0:
        return []
    flat = labels.ravel()
    area = np.bincount(flat, minlength=n + 1)
    rows, cols = np.indices(ch.shape)
    row_sum = np.bincount(flat, weights=rows.ravel(), minlength=n + 1)
    col_sum = np.bincount(flat, weights=cols.ravel(), minlength=n + 1)
    int_sum = np.bincount(flat, weights=ch.ravel(), minlength=n + 1)
    blobs = [
        Blob(row_sum[i] / area[i], col_sum[i] / area[i], int(area[i]), int_sum[i] / area[i])
        for i in range(1, n + 1)
        if area[i] >= config.min_area_px
    ]
    return sorted(blobs)


def aggregate_detections(
    per_patch: Iterable[tuple[PatchRef, Sequence[Blob]]],
    height: int,
    width: int,
    pixel_spacing_m: float,
    config: RefDetectConfig = RefDetectConfig(),
) -> list[DetectionRecord]:
    """Move blobs to the scene frame and suppress duplicates.

    Centroids are rounded to pixel indices; blobs whose rounded position falls
    outside the scene (reflected padding) are dropped. Candidates are visited
    by descending intensity and kept only if no kept record lies within
    ``merge_radius_m``, so overlapping windows yield one record per target.
    """
    candidates = []
    scene_id = None
    for ref, blobs in per_patch:
        scene_id = ref.scene_id
        for b in blobs:
            r = int(np.rint(ref.row_offset + b.row))
            c = int(np.rint(ref.col_offset + b.col))
            if 0 <= r < height and 0 <= c < width:
                candidates.append((-b.mean_intensity, r, c, b.mean_intensity))
    candidates.sort()
    radius_px = config.merge_radius_m / pixel_spacing_m
    kept: list[tuple[int, int, float]] = []
    for _, r, c, intensity in candidates:
        if all(math.hypot(r - kr, c - kc) > radius_px for kr, kc, _ in kept):
            kept.append((r, c, intensity))
    is_vessel, is_fishing = config.class_rule.flags()
    kept.sort()
    return [
        DetectionRecord(scene_id, r, c, is_vessel, is_fishing, float(min(max(s, 0.0), 1.0)))
        for r, c, s in kept
    ]


def detect_scene(
    scene: Scene,
    policy: TilingPolicy = TilingPolicy(),
    config: RefDetectConfig = RefDetectConfig(),
    workers: int = 1,
) -> list[DetectionRecord]:
    patches = preprocess_scene(scene, policy, FusionMethod(), workers).patches
    if workers > 1 and len(patches) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blobs = list(pool.map(lambda p: detect_patch(p, config), patches))
    else:
        blobs = [detect_patch(p, config) for p in patches]
    records = aggregate_detections(
        zip((p.ref for p in patches), blobs), scene.height, scene.width,
        scene.pixel_spacing_m, config,
    )
    return records

"""Scene tiling, per-patch min-max normalization and third-channel fusion."""

from __future__ import annotations

import enum
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import AUXILIARY_NAMES, Patch, PatchRef, Raster, Scene, canonical_auxiliary
from .errors import ConfigError, Degenerate, MissingAuxiliary

log = logging.getLogger(__name__)


class EdgePolicy(str, enum.Enum):
    PAD_REFLECT = "pad_reflect"
    PAD_ZERO = "pad_zero"
    DROP_PARTIAL = "drop_partial"


@dataclass(frozen=True)
class TilingPolicy:
    patch_size: int = 800
    edge_policy: EdgePolicy = EdgePolicy.PAD_ZERO
    stride: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "edge_policy", EdgePolicy(self.edge_policy))
        if self.stride is None:
            object.__setattr__(self, "stride", self.patch_size)
        if self.patch_size <= 0 or not 0 < self.stride <= self.patch_size:
            raise ConfigError(
                f"need 0 < stride <= patch_size, got stride={self.stride} patch={self.patch_size}"
            )


class FusionKind(str, enum.Enum):
    SINGLE_AUXILIARY = "aux"
    MEAN_VV_VH = "mean_vv_vh"
    DIFF_VV_VH = "diff_vv_vh"
    MEAN_AUXILIARIES = "mean_aux"
    MEAN_ALL = "mean_all"


@dataclass(frozen=True)
class FusionMethod:
    """How channel 3 is built.

    ``auxiliaries`` names the auxiliary inputs: exactly one for
    SINGLE_AUXILIARY, any subset (default: all five) for the mean fusions.
    """

    kind: FusionKind = FusionKind.MEAN_VV_VH
    auxiliaries: tuple[str, ...] = ()

    def __post_init__(self):
        kind = FusionKind(self.kind)
        object.__setattr__(self, "kind", kind)
        aux = tuple(canonical_auxiliary(a) for a in self.auxiliaries)
        if kind is FusionKind.SINGLE_AUXILIARY and len(aux) != 1:
            raise ConfigError("single-auxiliary fusion needs exactly one channel name")
        if kind in (FusionKind.MEAN_AUXILIARIES, FusionKind.MEAN_ALL) and not aux:
            aux = AUXILIARY_NAMES
        if kind in (FusionKind.MEAN_VV_VH, FusionKind.DIFF_VV_VH) and aux:
            raise ConfigError(f"{kind.value} takes no auxiliary channels")
        object.__setattr__(self, "auxiliaries", aux)

    @classmethod
    def parse(cls, text: str) -> "FusionMethod":
        """Parse ``mean_vv_vh``, ``diff_vv_vh``, ``aux:NAME``, ``mean_aux[:A,B]``
        or ``mean_all[:A,B]``."""
        kind, _, rest = text.strip().partition(":")
        names = tuple(n for n in rest.split(",") if n)
        try:
            return cls(FusionKind(kind), names)
        except ValueError as exc:
            raise ConfigError(f"bad fusion method {text!r}: {exc}") from exc

    def __str__(self) -> str:
        if self.kind is FusionKind.SINGLE_AUXILIARY or (
            self.auxiliaries and self.auxiliaries != AUXILIARY_NAMES
        ):
            return f"{self.kind.value}:{','.join(self.auxiliaries)}"
        return self.kind.value


@dataclass(frozen=True, eq=False)
class RawWindow:
    """Unnormalized VV/VH window plus per-axis scene indices.

    ``rows``/``cols`` give, for every window cell, the scene index it was
    read from (reflected under PAD_REFLECT); ``inside`` marks cells that lie
    in the scene or were reflected into it.
    """

    ref: PatchRef
    vv: np.ndarray
    vh: np.ndarray
    vv_valid: np.ndarray
    vh_valid: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    inside: np.ndarray


@dataclass(frozen=True)
class Discard:
    scene_id: str
    row_offset: int
    col_offset: int
    reason: str

    def as_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "row_offset": self.row_offset,
            "col_offset": self.col_offset,
            "reason": self.reason,
        }


@dataclass
class PreprocessResult:
    patches: list[Patch] = field(default_factory=list)
    discards: list[Discard] = field(default_factory=list)


def window_starts(n: int, policy: TilingPolicy) -> list[int]:
    p, s = policy.patch_size, policy.stride
    if policy.edge_policy is EdgePolicy.DROP_PARTIAL:
        return list(range(0, n - p + 1, s)) if n >= p else []
    starts = [0]
    while starts[-1] + p < n:
        starts.append(starts[-1] + s)
    return starts


def _reflect(idx: np.ndarray, n: int) -> np.ndarray:
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    m = np.mod(idx, period)
    return np.where(m < n, m, period - m)


def _axis_indices(start: int, size: int, n: int, policy: EdgePolicy):
    idx = np.arange(start, start + size)
    if policy is EdgePolicy.PAD_REFLECT:
        return _reflect(idx, n), np.ones(size, dtype=bool)
    inside = idx < n
    return np.minimum(idx, n - 1), inside


def tile_scene(scene: Scene, policy: TilingPolicy) -> list[RawWindow]:
    """Cut VV/VH into square windows, ordered by (row_offset, col_offset).

    Under PAD_ZERO, cells beyond the scene are zero and marked invalid.
    """
    p = policy.patch_size
    vv_valid_full = scene.vv.valid_mask()
    vh_valid_full = scene.vh.valid_mask()
    out = []
    for r0 in window_starts(scene.height, policy):
        rows, rin = _axis_indices(r0, p, scene.height, policy.edge_policy)
        for c0 in window_starts(scene.width, policy):
            cols, cin = _axis_indices(c0, p, scene.width, policy.edge_policy)
            inside = rin[:, None] & cin[None, :]
            grid = np.ix_(rows, cols)
            vv = np.where(inside, scene.vv.values[grid], 0.0).astype(np.float32)
            vh = np.where(inside, scene.vh.values[grid], 0.0).astype(np.float32)
            out.append(
                RawWindow(
                    ref=PatchRef(scene.scene_id, r0, c0, p),
                    vv=vv,
                    vh=vh,
                    vv_valid=inside & vv_valid_full[grid],
                    vh_valid=inside & vh_valid_full[grid],
                    rows=rows,
                    cols=cols,
                    inside=inside,
                )
            )
    return out


def min_max_normalize(values: np.ndarray, valid: Optional[np.ndarray] = None):
    """Map valid cells affinely onto [0, 1].

    Returns ``(normalized, mask)``; invalid cells are 0 in the output and
    False in the mask. Raises Degenerate when no valid cell exists or all
    valid cells share one value.
    """
    values = np.asarray(values, dtype=np.float64)
    mask = np.isfinite(values)
    if valid is not None:
        mask &= valid
    if not mask.any():
        raise Degenerate("no valid cells")
    v = values[mask]
    lo, hi = v.min(), v.max()
    if hi == lo:
        raise Degenerate(f"constant channel (value {lo})")
    out = np.zeros(values.shape, dtype=np.float32)
    out[mask] = ((v - lo) / (hi - lo)).astype(np.float32)
    return out, mask


def auxiliary_window(raster: Raster, window: RawWindow, scene: Scene):
    """Nearest-neighbor resample of a (lower resolution) auxiliary raster onto
    the window's scene cells. Returns ``(values, valid)``."""
    ar = np.minimum(((window.rows + 0.5) * raster.height / scene.height).astype(np.int64),
                    raster.height - 1)
    ac = np.minimum(((window.cols + 0.5) * raster.width / scene.width).astype(np.int64),
                    raster.width - 1)
    grid = np.ix_(ar, ac)
    values = raster.values[grid]
    valid = window.inside & raster.valid_mask()[grid]
    return values, valid


def fuse_channels(
    vv_norm: np.ndarray,
    vh_norm: np.ndarray,
    scene: Optional[Scene],
    method: FusionMethod,
    window: Optional[RawWindow] = None,
    vv_mask: Optional[np.ndarray] = None,
    vh_mask: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Build channel 3 from normalized VV/VH (and auxiliaries).

    Returns ``(channel3, mask)``. MEAN_VV_VH is the plain average and is not
    re-normalized; DIFF_VV_VH and the auxiliary fusions are re-normalized to
    [0, 1]. Inside the mean fusions, auxiliary inputs that are constant over
    the window carry no information and are left out of the mean.
    """
    shape = vv_norm.shape
    vv_mask = np.ones(shape, bool) if vv_mask is None else vv_mask
    vh_mask = np.ones(shape, bool) if vh_mask is None else vh_mask
    joint = vv_mask & vh_mask
    kind = method.kind

    if kind is FusionKind.MEAN_VV_VH:
        ch = np.where(joint, (vv_norm.astype(np.float64) + vh_norm) / 2.0, 0.0)
        return ch.astype(np.float32), joint
    if kind is FusionKind.DIFF_VV_VH:
        return min_max_normalize(vv_norm.astype(np.float64) - vh_norm, joint)

    if scene is None or window is None:
        raise ValueError("auxiliary fusions need the scene and raw window")
    missing = [a for a in method.auxiliaries if a not in scene.auxiliaries]
    if missing:
        raise MissingAuxiliary(missing[0])

    normed = []
    for name in method.auxiliaries:
        values, valid = auxiliary_window(scene.auxiliaries[name], window, scene)
        try:
            normed.append(min_max_normalize(values, valid))
        except Degenerate:
            if kind is FusionKind.SINGLE_AUXILIARY:
                raise
            log.debug("%s: auxiliary %s constant, left out of mean", window.ref, name)
    if kind is FusionKind.SINGLE_AUXILIARY:
        return normed[0]
    if kind is FusionKind.MEAN_ALL:
        normed = [(vv_norm, vv_mask), (vh_norm, vh_mask), *normed]
    if not normed:
        raise Degenerate("every auxiliary channel is constant")
    stack = np.stack([n for n, _ in normed]).astype(np.float64)
    mask = np.logical_and.reduce([m for _, m in normed])
    return min_max_normalize(stack.mean(axis=0), mask)


def process_window(window: RawWindow, scene: Scene, method: FusionMethod):
    """Normalize and fuse one window. Returns a Patch or a Discard."""
    ref = window.ref
    try:
        vv_n, vv_m = min_max_normalize(window.vv, window.vv_valid)
    except Degenerate as exc:
        return Discard(ref.scene_id, ref.row_offset, ref.col_offset, f"degenerate:vv:{exc}")
    try:
        vh_n, vh_m = min_max_normalize(window.vh, window.vh_valid)
    except Degenerate as exc:
        return Discard(ref.scene_id, ref.row_offset, ref.col_offset, f"degenerate:vh:{exc}")
    try:
        ch3, m3 = fuse_channels(vv_n, vh_n, scene, method, window, vv_m, vh_m)
    except MissingAuxiliary as exc:
        return Discard(ref.scene_id, ref.row_offset, ref.col_offset, f"missing_auxiliary:{exc.name}")
    except Degenerate as exc:
        return Discard(ref.scene_id, ref.row_offset, ref.col_offset, f"degenerate:channel3:{exc}")
    return Patch(
        scene_id=ref.scene_id,
        row_offset=ref.row_offset,
        col_offset=ref.col_offset,
        size=ref.size,
        channels=np.stack([vv_n, vh_n, ch3]),
        channel_spec=str(method),
        valid_mask=vv_m & vh_m & m3,
    )


def preprocess_scene(
    scene: Scene,
    policy: TilingPolicy = TilingPolicy(),
    method: FusionMethod = FusionMethod(),
    workers: int = 1,
) -> PreprocessResult:
    """Tile, normalize and fuse a scene.

    Degenerate or unfusable windows go to the discard log. Output order is
    (row_offset, col_offset) regardless of ``workers``.
    """
    windows = tile_scene(scene, policy)
    if workers > 1 and len(windows) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda w: process_window(w, scene, method), windows))
    else:
        results = [process_window(w, scene, method) for w in windows]
    out = PreprocessResult()
    for item in results:
        (out.discards if isinstance(item, Discard) else out.patches).append(item)
    out.patches.sort(key=lambda p: (p.row_offset, p.col_offset))
    out.discards.sort(key=lambda d: (d.row_offset, d.col_offset))
    if out.discards:
        log.info("%s: %d of %d windows discarded", scene.scene_id, len(out.discards), len(windows))
    return out


# -- patch export -------------------------------------------------------------

PATCH_INDEX = "patches.jsonl"
DISCARD_LOG = "discards.jsonl"


def write_patches(patches: Iterable[Patch], directory: str | Path) -> list[dict]:
    """Save each patch as ``<stem>.npy`` (float32, 3×S×S) plus ``<stem>_mask.npy``.

    Returns the index records, in input order.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = []
    for p in patches:
        stem = p.ref.stem
        np.save(directory / f"{stem}.npy", np.ascontiguousarray(p.channels, dtype="<f4"))
        np.save(directory / f"{stem}_mask.npy", p.valid_mask.astype(np.uint8))
        index.append(
            {
                "scene_id": p.scene_id,
                "row_offset": p.row_offset,
                "col_offset": p.col_offset,
                "size": p.size,
                "channel_spec": p.channel_spec,
                "file": f"{stem}.npy",
                "mask": f"{stem}_mask.npy",
            }
        )
    return index


def write_jsonl(records: Iterable[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_patch(record: dict, directory: str | Path) -> Patch:
    directory = Path(directory)
    channels = np.load(directory / record["file"]).astype(np.float32)
    mask = np.load(directory / record["mask"]).astype(bool)
    return Patch(
        scene_id=record["scene_id"],
        row_offset=record["row_offset"],
        col_offset=record["col_offset"],
        size=record["size"],
        channels=channels,
        channel_spec=record["channel_spec"],
        valid_mask=mask,
    )


def patch_refs(records: Sequence[dict]) -> list[PatchRef]:
    return [
        PatchRef(r["scene_id"], r["row_offset"], r["col_offset"], r["size"]) for r in records
    ]

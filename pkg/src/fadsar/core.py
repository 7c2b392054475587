"""Shared value types and coordinate conventions.

Pixel coordinates are (row, col) with the origin at the top-left corner and
rows growing downward. Distances are converted to meters only through a
raster's ``pixel_spacing_m``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import AmbiguousLabel, ChannelDimensionMismatch, ConfigError, SchemaError

DEFAULT_PIXEL_SPACING_M = 10.0
DEFAULT_NODATA = -30000.0

AUXILIARY_NAMES = (
    "bathymetry",
    "wind_speed",
    "wind_direction",
    "wind_quality",
    "land_ice_mask",
)
AUXILIARY_ALIASES = {
    "wind_mass": "wind_quality",
    "owiMask": "land_ice_mask",
    "owiWindSpeed": "wind_speed",
    "owiWindDirection": "wind_direction",
    "owiWindQuality": "wind_quality",
}


def canonical_auxiliary(name: str) -> str:
    """Map an auxiliary channel name (or alias) to its canonical key."""
    key = AUXILIARY_ALIASES.get(name, name)
    if key not in AUXILIARY_NAMES:
        raise SchemaError(f"unknown auxiliary channel {name!r}")
    return key


class Confidence(enum.IntEnum):
    """Label confidence tier; ordering follows label quality."""

    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @classmethod
    def parse(cls, text: str) -> "Confidence":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown confidence {text!r}") from None


class ClassLabel(enum.IntEnum):
    FISHING = 0
    NON_FISHING = 1
    NON_VESSEL = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "ClassLabel":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown class {text!r}") from None


def class_label_from_flags(
    is_vessel: Optional[bool], is_fishing: Optional[bool]
) -> ClassLabel:
    """Merge the two boolean label columns into one of three classes.

    Raises AmbiguousLabel when vessel status is unknown, or when a vessel has
    no fishing flag; the caller decides whether to drop such records.
    """
    if is_vessel is None:
        raise AmbiguousLabel("is_vessel is absent")
    if not is_vessel:
        return ClassLabel.NON_VESSEL
    if is_fishing is None:
        raise AmbiguousLabel("vessel without is_fishing")
    return ClassLabel.FISHING if is_fishing else ClassLabel.NON_FISHING


@dataclass(frozen=True, eq=False)
class Raster:
    """A single-band float32 grid.

    Cells that are non-finite or ``<= nodata_sentinel`` are missing.
    """

    values: np.ndarray
    pixel_spacing_m: float = DEFAULT_PIXEL_SPACING_M
    nodata_sentinel: float = DEFAULT_NODATA

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise SchemaError(f"raster must be 2-D, got shape {values.shape}")
        if values.dtype != np.float32:
            values = values.astype(np.float32)
        else:
            values = values.copy() if values.flags.writeable else values
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if not self.pixel_spacing_m > 0:
            raise SchemaError(f"pixel_spacing_m must be > 0, got {self.pixel_spacing_m}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.values) & (self.values > self.nodata_sentinel)

    def equals(self, other: "Raster") -> bool:
        """Bit-exact equality of grids and header fields."""
        return (
            self.shape == other.shape
            and self.pixel_spacing_m == other.pixel_spacing_m
            and self.nodata_sentinel == other.nodata_sentinel
            and self.values.tobytes() == other.values.tobytes()
        )


@dataclass(frozen=True, eq=False)
class Scene:
    scene_id: str
    vv: Raster
    vh: Raster
    auxiliaries: Mapping[str, Raster] = field(default_factory=dict)
    shore_distance: Optional[Raster] = None

    def __post_init__(self):
        if self.vv.shape != self.vh.shape:
            raise ChannelDimensionMismatch(
                f"scene {self.scene_id}: VV {self.vv.shape} != VH {self.vh.shape}"
            )
        aux = {canonical_auxiliary(k): v for k, v in self.auxiliaries.items()}
        if len(aux) != len(self.auxiliaries):
            raise SchemaError(f"scene {self.scene_id}: duplicate auxiliary channels")
        object.__setattr__(self, "auxiliaries", dict(sorted(aux.items())))

    @property
    def height(self) -> int:
        return self.vv.height

    @property
    def width(self) -> int:
        return self.vv.width

    @property
    def pixel_spacing_m(self) -> float:
        return self.vv.pixel_spacing_m


@dataclass(frozen=True)
class LabelRecord:
    """One ground-truth point object in scene pixel coordinates."""

    detect_id: str
    scene_id: str
    row: int
    col: int
    confidence: Confidence
    is_vessel: Optional[bool] = None
    is_fishing: Optional[bool] = None
    vessel_length_m: Optional[float] = None
    distance_from_shore_km: Optional[float] = None
    source: str = ""

    def __post_init__(self):
        if self.is_fishing is not None and self.is_vessel is not True:
            raise SchemaError(
                f"label {self.detect_id}: is_fishing set but is_vessel is {self.is_vessel}"
            )

    def inside(self, height: int, width: int) -> bool:
        return 0 <= self.row < height and 0 <= self.col < width


@dataclass(frozen=True)
class DetectionRecord:
    """One predicted point object in scene pixel coordinates."""

    scene_id: str
    row: int
    col: int
    is_vessel: bool
    is_fishing: bool
    score: float = 1.0

    def __post_init__(self):
        if self.is_fishing and not self.is_vessel:
            raise SchemaError("is_fishing requires is_vessel")
        if not 0.0 <= self.score <= 1.0:
            raise SchemaError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True, order=True)
class PatchRef:
    """Location of a square window in its scene."""

    scene_id: str
    row_offset: int
    col_offset: int
    size: int

    def contains(self, row: int, col: int) -> bool:
        return (
            self.row_offset <= row < self.row_offset + self.size
            and self.col_offset <= col < self.col_offset + self.size
        )

    @property
    def stem(self) -> str:
        return f"{self.scene_id}_r{self.row_offset:06d}_c{self.col_offset:06d}"


@dataclass(frozen=True, eq=False)
class Patch:
    """A normalized 3-channel window; ``channels`` has shape (3, size, size)."""

    scene_id: str
    row_offset: int
    col_offset: int
    size: int
    channels: np.ndarray
    channel_spec: str
    valid_mask: np.ndarray

    def __post_init__(self):
        if self.channels.shape != (3, self.size, self.size):
            raise SchemaError(f"patch channels shape {self.channels.shape}")
        if self.valid_mask.shape != (self.size, self.size):
            raise SchemaError(f"patch mask shape {self.valid_mask.shape}")
        self.channels.setflags(write=False)
        self.valid_mask.setflags(write=False)

    @property
    def ref(self) -> PatchRef:
        return PatchRef(self.scene_id, self.row_offset, self.col_offset, self.size)


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn}


METRIC_KEYS = ("detection", "shore", "vessel", "fishing")


@dataclass(frozen=True)
class MetricsReport:
    f1_d: float
    f1_s: float
    f1_v: float
    f1_f: float
    avg_f1: float
    counts: Mapping[str, Counts]
    f1_s_computable: bool = True
    shore_fp_unresolved: int = 0
    per_scene: Mapping[str, dict] = field(default_factory=dict)
    rules: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("f1_d", "f1_s", "f1_v", "f1_f", "avg_f1"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name}={value} outside [0, 1]")

    def to_dict(self) -> dict:
        counts = {k: self.counts[k].as_dict() for k in METRIC_KEYS}
        counts["shore"]["fp_unresolved"] = self.shore_fp_unresolved
        return {
            "f1_d": self.f1_d,
            "f1_s": self.f1_s,
            "f1_v": self.f1_v,
            "f1_f": self.f1_f,
            "avg_f1": self.avg_f1,
            "counts": counts,
            "f1_s_computable": self.f1_s_computable,
            "per_scene": {k: self.per_scene[k] for k in sorted(self.per_scene)},
            "rules": dict(self.rules),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        counts = {}
        unresolved = 0
        for k in METRIC_KEYS:
            c = dict(data["counts"][k])
            unresolved = c.pop("fp_unresolved", unresolved)
            counts[k] = Counts(**c)
        return cls(
            f1_d=data["f1_d"],
            f1_s=data["f1_s"],
            f1_v=data["f1_v"],
            f1_f=data["f1_f"],
            avg_f1=data["avg_f1"],
            counts=counts,
            f1_s_computable=data["f1_s_computable"],
            shore_fp_unresolved=unresolved,
            per_scene=data.get("per_scene", {}),
            rules=data.get("rules", {}),
        )

"""Point labels to patch-local bounding-box annotations."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .core import ClassLabel, Confidence, LabelRecord, PatchRef, class_label_from_flags
from .errors import AmbiguousLabel, CenterOutsidePatch, ConfigError

ABLATION_BBOX_SIZES = (10, 20, 30, 40)


class DropReason(str, enum.Enum):
    LOW_CONFIDENCE = "LowConfidence"
    AMBIGUOUS = "AmbiguousLabel"


@dataclass(frozen=True)
class AnnotateConfig:
    min_confidence: Confidence = Confidence.HIGH
    bbox_size: int = 20
    drop_ambiguous: bool = True

    def __post_init__(self):
        object.__setattr__(self, "min_confidence", Confidence(self.min_confidence))
        if self.bbox_size < 2 or self.bbox_size % 2:
            raise ConfigError(f"bbox_size must be even and >= 2, got {self.bbox_size}")


@dataclass(frozen=True, order=True)
class BBox:
    """Half-open pixel box ``[row_min, row_max) x [col_min, col_max)``."""

    row_min: int
    col_min: int
    row_max: int
    col_max: int

    @property
    def height(self) -> int:
        return self.row_max - self.row_min

    @property
    def width(self) -> int:
        return self.col_max - self.col_min

    @property
    def area(self) -> int:
        return self.height * self.width

    @property
    def center(self) -> tuple[float, float]:
        return (self.row_min + self.row_max) / 2, (self.col_min + self.col_max) / 2


@dataclass(frozen=True, order=True)
class Annotation:
    patch: PatchRef
    bbox: BBox
    label: ClassLabel
    detect_id: str


@dataclass(frozen=True)
class DroppedLabel:
    label: LabelRecord
    reason: str

    def as_dict(self) -> dict:
        return {"detect_id": self.label.detect_id, "scene_id": self.label.scene_id,
                "reason": self.reason}


@dataclass
class AnnotationResult:
    annotations: list[Annotation] = field(default_factory=list)
    dropped: list[DroppedLabel] = field(default_factory=list)
    unplaced: list[DroppedLabel] = field(default_factory=list)


def resolve_class(label: LabelRecord, drop_ambiguous: bool = True) -> ClassLabel:
    """Class for ``label``; with ``drop_ambiguous`` off, a vessel of unknown
    fishing status counts as non_fishing and unknown vessel status as
    non_vessel."""
    try:
        return class_label_from_flags(label.is_vessel, label.is_fishing)
    except AmbiguousLabel:
        if drop_ambiguous:
            raise
        return ClassLabel.NON_FISHING if label.is_vessel else ClassLabel.NON_VESSEL


def filter_labels(labels: Iterable[LabelRecord], config: AnnotateConfig = AnnotateConfig()):
    """Split labels into (kept, dropped); together they partition the input."""
    kept, dropped = [], []
    for lab in labels:
        if lab.confidence < config.min_confidence:
            dropped.append(DroppedLabel(lab, DropReason.LOW_CONFIDENCE.value))
            continue
        try:
            resolve_class(lab, config.drop_ambiguous)
        except AmbiguousLabel:
            dropped.append(DroppedLabel(lab, DropReason.AMBIGUOUS.value))
            continue
        kept.append(lab)
    return kept, dropped


def synthesize_bbox(center_row: int, center_col: int, bbox_size: int, patch_size: int) -> BBox:
    if not (0 <= center_row < patch_size and 0 <= center_col < patch_size):
        raise CenterOutsidePatch(f"center ({center_row}, {center_col}) outside patch {patch_size}")
    half = bbox_size // 2
    return BBox(
        max(0, center_row - half),
        max(0, center_col - half),
        min(patch_size, center_row + half),
        min(patch_size, center_col + half),
    )


def labels_to_annotations(
    labels: Iterable[LabelRecord],
    patches: Sequence[PatchRef],
    config: AnnotateConfig = AnnotateConfig(),
    discarded: Sequence[PatchRef] = (),
) -> AnnotationResult:
    """Filter labels and box each kept one in every patch containing it.

    ``discarded`` are windows removed during preprocessing; kept labels that
    fall only there (or in no window at all) go to ``unplaced``.
    """
    kept, dropped = filter_labels(labels, config)
    by_scene: dict[str, list[PatchRef]] = {}
    for p in patches:
        by_scene.setdefault(p.scene_id, []).append(p)
    discarded_by_scene: dict[str, list[PatchRef]] = {}
    for p in discarded:
        discarded_by_scene.setdefault(p.scene_id, []).append(p)

    result = AnnotationResult(dropped=dropped)
    for lab in kept:
        cls = resolve_class(lab, config.drop_ambiguous)
        hits = [p for p in by_scene.get(lab.scene_id, ()) if p.contains(lab.row, lab.col)]
        if not hits:
            in_discarded = any(
                p.contains(lab.row, lab.col) for p in discarded_by_scene.get(lab.scene_id, ())
            )
            result.unplaced.append(
                DroppedLabel(lab, "InDiscardedPatch" if in_discarded else "OutsidePatches")
            )
            continue
        for p in hits:
            box = synthesize_bbox(lab.row - p.row_offset, lab.col - p.col_offset,
                                  config.bbox_size, p.size)
            result.annotations.append(Annotation(p, box, cls, lab.detect_id))
    result.annotations.sort()
    return result


# -- COCO export ----------------------------------------------------------------

def _image_records(patches: Sequence[PatchRef]) -> list[dict]:
    return [
        {
            "id": i,
            "file_name": f"{p.stem}.npy",
            "width": p.size,
            "height": p.size,
            "scene_id": p.scene_id,
            "row_offset": p.row_offset,
            "col_offset": p.col_offset,
        }
        for i, p in enumerate(sorted(set(patches)), start=1)
    ]


def to_coco(annotations: Iterable[Annotation], patches: Sequence[PatchRef]) -> dict:
    """COCO-style dict; boxes are ``[x, y, width, height]`` with x = column."""
    images = _image_records(patches)
    image_ids = {
        PatchRef(im["scene_id"], im["row_offset"], im["col_offset"], im["width"]): im["id"]
        for im in images
    }
    anns = []
    for i, a in enumerate(sorted(annotations), start=1):
        if a.patch not in image_ids:
            raise ValueError(f"annotation {a.detect_id} references unknown patch {a.patch}")
        b = a.bbox
        anns.append(
            {
                "id": i,
                "image_id": image_ids[a.patch],
                "category_id": int(a.label),
                "bbox": [b.col_min, b.row_min, b.width, b.height],
                "area": b.area,
                "iscrowd": 0,
                "detect_id": a.detect_id,
            }
        )
    return {
        "images": images,
        "annotations": anns,
        "categories": [{"id": int(c), "name": c.label} for c in ClassLabel],
    }


def export_annotations(
    annotations: Iterable[Annotation], patches: Sequence[PatchRef], path: str | Path
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_coco(annotations, patches), indent=1) + "\n")


def import_annotations(path: str | Path) -> tuple[list[Annotation], list[PatchRef]]:
    doc = json.loads(Path(path).read_text())
    refs = {}
    for im in doc["images"]:
        refs[im["id"]] = PatchRef(im["scene_id"], im["row_offset"], im["col_offset"], im["width"])
    anns = []
    for a in doc["annotations"]:
        x, y, w, h = a["bbox"]
        anns.append(
            Annotation(refs[a["image_id"]], BBox(y, x, y + h, x + w),
                       ClassLabel(a["category_id"]), a["detect_id"])
        )
    return sorted(anns), sorted(refs.values())


def write_drop_log(entries: Iterable[DroppedLabel], path: str | Path,
                   extra: Optional[Iterable[DroppedLabel]] = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for e in [*entries, *(extra or ())]:
            fh.write(json.dumps(e.as_dict()) + "\n")

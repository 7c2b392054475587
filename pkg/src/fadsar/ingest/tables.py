"""CSV label/prediction tables and the JSON metrics report."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Callable, Iterable, Optional, TextIO, TypeVar

from ..core import Confidence, DetectionRecord, LabelRecord, MetricsReport
from ..errors import CsvSchemaError, RowParseError, SchemaError, SceneIOError

ROW_COL = "detect_scene_row"
COL_COL = "detect_scene_column"

LABEL_COLUMNS = (
    "detect_id",
    "scene_id",
    ROW_COL,
    COL_COL,
    "is_vessel",
    "is_fishing",
    "vessel_length_m",
    "confidence",
    "distance_from_shore_km",
    "source",
)
LABEL_REQUIRED = ("detect_id", "scene_id", ROW_COL, COL_COL, "confidence")

PREDICTION_COLUMNS = ("scene_id", ROW_COL, COL_COL, "is_vessel", "is_fishing", "score")
PREDICTION_REQUIRED = ("scene_id", ROW_COL, COL_COL, "is_vessel", "is_fishing")

_TRUE = {"true", "1"}
_FALSE = {"false", "0"}

T = TypeVar("T")


def parse_bool(text: str) -> Optional[bool]:
    t = text.strip()
    if t == "":
        return None
    if t.lower() in _TRUE:
        return True
    if t.lower() in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_index(text: str) -> int:
    t = text.strip()
    try:
        return int(t)
    except ValueError:
        value = float(t)
        if not value.is_integer():
            raise ValueError(f"pixel index is not integral: {text!r}") from None
        return int(value)


def parse_optional_float(text: str) -> Optional[float]:
    t = text.strip()
    if t == "":
        return None
    value = float(t)
    if math.isnan(value):
        return None
    return value


def fmt_bool(value: Optional[bool]) -> str:
    return "" if value is None else ("true" if value else "false")


def fmt_float(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def _open_text(source: str | Path | TextIO):
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.is_file():
            raise SceneIOError(f"file not found: {path}")
        return open(path, newline="", encoding="utf-8")
    return source


def _read_rows(
    source: str | Path | TextIO,
    required: Iterable[str],
    build: Callable[[dict], T],
) -> list[T]:
    stream = _open_text(source)
    try:
        reader = csv.DictReader(stream)
        if reader.fieldnames is None:
            raise CsvSchemaError("missing header row")
        header = [h.strip() for h in reader.fieldnames]
        reader.fieldnames = header
        missing = [c for c in required if c not in header]
        if missing:
            raise CsvSchemaError(f"missing required column(s): {', '.join(missing)}")
        out = []
        for n, row in enumerate(reader, start=1):
            if None in row:
                raise RowParseError(n, "more fields than header columns")
            try:
                out.append(build({k: (v if v is not None else "") for k, v in row.items()}))
            except (ValueError, SchemaError) as exc:
                raise RowParseError(n, str(exc)) from exc
        return out
    finally:
        if stream is not source:
            stream.close()


def _label_from_row(row: dict) -> LabelRecord:
    if not row["detect_id"].strip() or not row["scene_id"].strip():
        raise ValueError("detect_id and scene_id must be non-empty")
    return LabelRecord(
        detect_id=row["detect_id"].strip(),
        scene_id=row["scene_id"].strip(),
        row=parse_index(row[ROW_COL]),
        col=parse_index(row[COL_COL]),
        confidence=Confidence.parse(row["confidence"]),
        is_vessel=parse_bool(row.get("is_vessel", "")),
        is_fishing=parse_bool(row.get("is_fishing", "")),
        vessel_length_m=parse_optional_float(row.get("vessel_length_m", "")),
        distance_from_shore_km=parse_optional_float(row.get("distance_from_shore_km", "")),
        source=row.get("source", "").strip(),
    )


def _prediction_from_row(row: dict) -> DetectionRecord:
    is_vessel = parse_bool(row["is_vessel"])
    if is_vessel is None:
        raise ValueError("is_vessel is blank")
    is_fishing = parse_bool(row["is_fishing"])
    score = parse_optional_float(row.get("score", ""))
    if not row["scene_id"].strip():
        raise ValueError("scene_id is blank")
    return DetectionRecord(
        scene_id=row["scene_id"].strip(),
        row=parse_index(row[ROW_COL]),
        col=parse_index(row[COL_COL]),
        is_vessel=is_vessel,
        # blank fishing flag only occurs on non-vessel rows of a label file
        is_fishing=bool(is_fishing),
        score=1.0 if score is None else score,
    )


def parse_labels(source: str | Path | TextIO) -> list[LabelRecord]:
    """Parse a ground-truth label CSV. Blank optional fields become None."""
    return _read_rows(source, LABEL_REQUIRED, _label_from_row)


def parse_predictions(source: str | Path | TextIO) -> list[DetectionRecord]:
    """Parse a prediction CSV. A missing ``score`` column or blank score is 1.0."""
    return _read_rows(source, PREDICTION_REQUIRED, _prediction_from_row)


def _write_rows(dest: str | Path | TextIO, columns, rows: Iterable[list[str]]) -> None:
    if isinstance(dest, (str, Path)):
        Path(dest).parent.mkdir(parents=True, exist_ok=True)
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            _write_rows(fh, columns, rows)
        return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)


def write_labels(labels: Iterable[LabelRecord], dest: str | Path | TextIO) -> None:
    _write_rows(
        dest,
        LABEL_COLUMNS,
        (
            [
                r.detect_id,
                r.scene_id,
                str(r.row),
                str(r.col),
                fmt_bool(r.is_vessel),
                fmt_bool(r.is_fishing),
                fmt_float(r.vessel_length_m),
                r.confidence.name,
                fmt_float(r.distance_from_shore_km),
                r.source,
            ]
            for r in labels
        ),
    )


def write_predictions(preds: Iterable[DetectionRecord], dest: str | Path | TextIO) -> None:
    _write_rows(
        dest,
        PREDICTION_COLUMNS,
        (
            [
                r.scene_id,
                str(r.row),
                str(r.col),
                fmt_bool(r.is_vessel),
                fmt_bool(r.is_fishing),
                fmt_float(r.score),
            ]
            for r in preds
        ),
    )


def labels_to_csv(labels: Iterable[LabelRecord]) -> str:
    buf = io.StringIO()
    write_labels(labels, buf)
    return buf.getvalue()


def predictions_to_csv(preds: Iterable[DetectionRecord]) -> str:
    buf = io.StringIO()
    write_predictions(preds, buf)
    return buf.getvalue()


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"


def write_report(report: MetricsReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report_to_json(report))


def read_report(path: str | Path) -> MetricsReport:
    return MetricsReport.from_dict(json.loads(Path(path).read_text()))

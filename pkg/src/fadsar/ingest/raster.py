"""Single-band raster IO.

Two on-disk formats are supported:

* GeoTIFF (``.tif``/``.tiff``), one band, float32 or int16. Pixel spacing is
  taken from ``ModelPixelScaleTag`` and the nodata value from ``GDAL_NODATA``.
* A raw fallback: a JSON header (``.json``) naming a little-endian float32
  row-major binary file that sits beside it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tifffile

from ..core import DEFAULT_NODATA, DEFAULT_PIXEL_SPACING_M, Raster
from ..errors import SceneIOError, UnsupportedFormat

log = logging.getLogger(__name__)

TIFF_SUFFIXES = {".tif", ".tiff"}
RAW_HEADER_SUFFIX = ".json"
RAW_DATA_SUFFIX = ".f32"

_TAG_PIXEL_SCALE = 33550
_TAG_GDAL_NODATA = 42113
_SUPPORTED_TIFF_DTYPES = (np.float32, np.float64, np.int16, np.uint16, np.uint8)


@dataclass(frozen=True)
class RasterInfo:
    height: int
    width: int
    pixel_spacing_m: float
    nodata_sentinel: float


def _check_exists(path: Path) -> None:
    if not path.is_file():
        raise SceneIOError(f"raster file not found: {path}")


def _tiff_header(tif: tifffile.TiffFile) -> tuple[float, float]:
    page = tif.pages[0]
    spacing = DEFAULT_PIXEL_SPACING_M
    nodata = DEFAULT_NODATA
    scale = page.tags.get(_TAG_PIXEL_SCALE)
    if scale is not None:
        sx = float(scale.value[0])
        # sub-unit scales are angular (geographic CRS); keep the default spacing
        if sx >= 1.0:
            spacing = sx
    tag = page.tags.get(_TAG_GDAL_NODATA)
    if tag is not None:
        text = str(tag.value).strip().strip("\x00")
        try:
            nodata = float(text)
        except ValueError:
            log.warning("ignoring unparseable GDAL_NODATA tag %r", text)
    return spacing, nodata


def read_raster_info(path: str | Path) -> RasterInfo:
    """Read only the header of a raster file."""
    path = Path(path)
    _check_exists(path)
    suffix = path.suffix.lower()
    if suffix in TIFF_SUFFIXES:
        try:
            with tifffile.TiffFile(path) as tif:
                shape = tif.pages[0].shape
                spacing, nodata = _tiff_header(tif)
        except (tifffile.TiffFileError, ValueError) as exc:
            raise UnsupportedFormat(f"{path}: {exc}") from exc
        if len(shape) != 2:
            raise UnsupportedFormat(f"{path}: expected a single band, got shape {shape}")
        return RasterInfo(shape[0], shape[1], spacing, nodata)
    if suffix == RAW_HEADER_SUFFIX:
        header = _read_raw_header(path)
        return RasterInfo(
            header["height"], header["width"], header["pixel_spacing_m"], header["nodata"]
        )
    raise UnsupportedFormat(f"{path}: unsupported raster suffix {suffix!r}")


def _read_raw_header(path: Path) -> dict:
    try:
        header = json.loads(path.read_text())
        header["height"] = int(header["height"])
        header["width"] = int(header["width"])
        header["pixel_spacing_m"] = float(header.get("pixel_spacing_m", DEFAULT_PIXEL_SPACING_M))
        header["nodata"] = float(header.get("nodata", DEFAULT_NODATA))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UnsupportedFormat(f"{path}: bad raw raster header ({exc})") from exc
    if header.get("dtype", "float32") != "float32":
        raise UnsupportedFormat(f"{path}: raw rasters must be float32")
    return header


def read_raster(path: str | Path) -> Raster:
    path = Path(path)
    _check_exists(path)
    suffix = path.suffix.lower()
    if suffix in TIFF_SUFFIXES:
        try:
            with tifffile.TiffFile(path) as tif:
                values = tif.pages[0].asarray()
                spacing, nodata = _tiff_header(tif)
        except (tifffile.TiffFileError, ValueError) as exc:
            raise UnsupportedFormat(f"{path}: {exc}") from exc
        values = np.squeeze(values)
        if values.ndim != 2:
            raise UnsupportedFormat(f"{path}: expected a single band, got shape {values.shape}")
        if values.dtype.type not in _SUPPORTED_TIFF_DTYPES:
            raise UnsupportedFormat(f"{path}: unsupported dtype {values.dtype}")
        return Raster(values.astype(np.float32), spacing, nodata)
    if suffix == RAW_HEADER_SUFFIX:
        header = _read_raw_header(path)
        data_path = path.parent / header.get("data", path.with_suffix(RAW_DATA_SUFFIX).name)
        _check_exists(data_path)
        values = np.fromfile(data_path, dtype="<f4")
        expected = header["height"] * header["width"]
        if values.size != expected:
            raise UnsupportedFormat(
                f"{data_path}: {values.size} values, header says {expected}"
            )
        values = values.reshape(header["height"], header["width"]).astype(np.float32)
        return Raster(values, header["pixel_spacing_m"], header["nodata"])
    raise UnsupportedFormat(f"{path}: unsupported raster suffix {suffix!r}")


def write_raster(raster: Raster, path: str | Path) -> Path:
    """Write ``raster``; the format follows the suffix of ``path``.

    For the raw format ``path`` is the header; the binary is written next to
    it with the ``.f32`` suffix. Returns the path to pass to ``read_raster``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    suffix = path.suffix.lower()
    if suffix in TIFF_SUFFIXES:
        s = raster.pixel_spacing_m
        tifffile.imwrite(
            path,
            raster.values,
            extratags=[
                (_TAG_PIXEL_SCALE, "d", 3, (s, s, 0.0), True),
                (_TAG_GDAL_NODATA, "s", 0, repr(float(raster.nodata_sentinel)), True),
            ],
        )
        return path
    if suffix == RAW_HEADER_SUFFIX:
        data_path = path.with_suffix(RAW_DATA_SUFFIX)
        raster.values.astype("<f4").tofile(data_path)
        header = {
            "width": raster.width,
            "height": raster.height,
            "pixel_spacing_m": raster.pixel_spacing_m,
            "nodata": raster.nodata_sentinel,
            "dtype": "float32",
            "byteorder": "little",
            "data": data_path.name,
        }
        path.write_text(json.dumps(header, indent=2) + "\n")
        return path
    raise UnsupportedFormat(f"{path}: unsupported raster suffix {suffix!r}")

from .manifest import (
    DatasetManifest,
    SceneEntry,
    load_manifest,
    load_scene,
    scene_geometry,
    write_manifest,
)
from .raster import RasterInfo, read_raster, read_raster_info, write_raster
from .synth import SynthSpec, synth_scene, write_dataset, write_scene
from .tables import (
    labels_to_csv,
    parse_labels,
    parse_predictions,
    predictions_to_csv,
    read_report,
    report_to_json,
    write_labels,
    write_predictions,
    write_report,
)

__all__ = [
    "DatasetManifest",
    "RasterInfo",
    "SceneEntry",
    "SynthSpec",
    "labels_to_csv",
    "load_manifest",
    "load_scene",
    "parse_labels",
    "parse_predictions",
    "predictions_to_csv",
    "read_raster",
    "read_raster_info",
    "read_report",
    "report_to_json",
    "scene_geometry",
    "synth_scene",
    "write_dataset",
    "write_labels",
    "write_manifest",
    "write_predictions",
    "write_raster",
    "write_report",
    "write_scene",
]

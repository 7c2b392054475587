"""Command-line entry point: ``fadsar {synth,tile,dataset,detect,score}``.

Configuration precedence is CLI flag > ``--config`` JSON file > defaults.
Log level comes from the FADSAR_LOG environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .annotate import AnnotateConfig, export_annotations, labels_to_annotations, write_drop_log
from .core import Confidence, MetricsReport, PatchRef
from .errors import ConfigError, FadsarError, SceneIOError, SchemaError
from .ingest import (
    SynthSpec,
    load_manifest,
    load_scene,
    parse_labels,
    write_dataset,
    write_predictions,
    write_report,
)
from .preprocess import (
    DISCARD_LOG,
    PATCH_INDEX,
    EdgePolicy,
    FusionMethod,
    TilingPolicy,
    preprocess_scene,
    write_jsonl,
    write_patches,
)
from .refdetect import ClassRule, RefDetectConfig, detect_scene
from .score import ScoreConfig, score_run

log = logging.getLogger("fadsar")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SCHEMA = 4
EXIT_OTHER = 5


@dataclass(frozen=True)
class PipelineConfig:
    tiling: TilingPolicy = field(default_factory=TilingPolicy)
    fusion: FusionMethod = field(default_factory=FusionMethod)
    annotate: AnnotateConfig = field(default_factory=AnnotateConfig)
    refdetect: RefDetectConfig = field(default_factory=RefDetectConfig)
    score: ScoreConfig = field(default_factory=ScoreConfig)
    workers: int = 1
    out: Path = Path("out")

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def _build(cls, values: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown keys {sorted(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{cls.__name__}: {exc}") from exc


def load_config(file_values: dict, overrides: dict) -> PipelineConfig:
    """Merge nested dicts (file, then CLI overrides) into a PipelineConfig."""
    merged: dict = {k: dict(v) if isinstance(v, dict) else v for k, v in file_values.items()}
    for key, value in overrides.items():
        if value is None:
            continue
        section, _, name = key.partition(".")
        if name:
            merged.setdefault(section, {})[name] = value
        else:
            merged[section] = value

    tiling = dict(merged.get("tiling", {}))
    if "edge_policy" in tiling:
        tiling["edge_policy"] = _enum(EdgePolicy, tiling["edge_policy"])
    fusion = merged.get("fusion", "mean_vv_vh")
    fusion = FusionMethod.parse(fusion) if isinstance(fusion, str) else _build(FusionMethod, fusion)
    annotate = dict(merged.get("annotate", {}))
    if "min_confidence" in annotate:
        annotate["min_confidence"] = _confidence(annotate["min_confidence"])
    refdetect = dict(merged.get("refdetect", {}))
    if "class_rule" in refdetect:
        refdetect["class_rule"] = _enum(ClassRule, refdetect["class_rule"])
    score = dict(merged.get("score", {}))
    if "min_confidence_gt" in score:
        score["min_confidence_gt"] = _confidence(score["min_confidence_gt"])
    unknown = set(merged) - {"tiling", "fusion", "annotate", "refdetect", "score", "workers", "out"}
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    return PipelineConfig(
        tiling=_build(TilingPolicy, tiling),
        fusion=fusion,
        annotate=_build(AnnotateConfig, annotate),
        refdetect=_build(RefDetectConfig, refdetect),
        score=_build(ScoreConfig, score),
        workers=int(merged.get("workers", 1)),
        out=Path(merged.get("out", "out")),
    )


def _enum(cls, value):
    try:
        return cls(value)
    except ValueError:
        raise ConfigError(f"bad {cls.__name__} {value!r}") from None


def _confidence(value) -> Confidence:
    if isinstance(value, int):
        return Confidence(value)
    try:
        return Confidence.parse(value)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--patch-size", type=int, dest="tiling.patch_size")
    p.add_argument("--stride", type=int, dest="tiling.stride")
    p.add_argument("--edge-policy", choices=[e.value for e in EdgePolicy], dest="tiling.edge_policy")
    p.add_argument("--fusion", dest="fusion",
                   help="mean_vv_vh | diff_vv_vh | aux:NAME | mean_aux[:A,B] | mean_all[:A,B]")
    p.add_argument("--bbox-size", type=int, dest="annotate.bbox_size")
    p.add_argument("--min-confidence", dest="annotate.min_confidence",
                   help="lowest label tier kept for training (HIGH/MEDIUM/LOW)")
    p.add_argument("--k-sigma", type=float, dest="refdetect.k_sigma")
    p.add_argument("--min-area", type=int, dest="refdetect.min_area_px")
    p.add_argument("--merge-radius-m", type=float, dest="refdetect.merge_radius_m")
    p.add_argument("--class-rule", choices=[c.value for c in ClassRule], dest="refdetect.class_rule")
    p.add_argument("--match-radius-m", type=float, dest="score.match_radius_m")
    p.add_argument("--shore-km", type=float, dest="score.shore_threshold_km")
    p.add_argument("--min-confidence-gt", dest="score.min_confidence_gt")
    p.add_argument("--workers", type=int, dest="workers")
    p.add_argument("--out", type=Path, dest="out")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="fadsar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write synthetic scenes + labels.csv")
    s.add_argument("--width", type=int, default=1600)
    s.add_argument("--height", type=int, default=1600)
    s.add_argument("--n-targets", type=int, default=10)
    s.add_argument("--n-shore-targets", type=int, default=0)
    s.add_argument("--target-intensity", type=float, default=1.0)
    s.add_argument("--noise-level", type=float, default=0.2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scenes", type=int, default=1, help="number of scenes (seed, seed+1, ...)")
    s.add_argument("--format", choices=["raw", "tiff"], default="raw")
    s.add_argument("--no-auxiliaries", action="store_true")

    for name, text in (
        ("tile", "cut scenes into normalized patches"),
        ("dataset", "patches + COCO annotations from labels"),
        ("detect", "run the reference detector"),
    ):
        c = sub.add_parser(name, parents=[common], help=text)
        c.add_argument("manifest", type=Path)

    sc = sub.add_parser("score", parents=[common], help="score a predictions file")
    sc.add_argument("predictions", type=Path)
    sc.add_argument("--labels", type=Path, help="defaults to the manifest's labels file")
    sc.add_argument("--manifest", type=Path)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    keys = [k for k in vars(args) if "." in k or k in ("fusion", "workers", "out")]
    return {k: getattr(args, k) for k in keys}


def _read_config_file(path: Optional[Path]) -> dict:
    if path is None:
        return {}
    if not path.is_file():
        raise SceneIOError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def _tile_manifest(manifest, config: PipelineConfig):
    """Yield (entry, scene, PreprocessResult) scene by scene."""
    for entry in manifest.scenes:
        scene = load_scene(entry)
        yield entry, scene, preprocess_scene(scene, config.tiling, config.fusion, config.workers)


def cmd_synth(args, config: PipelineConfig) -> int:
    specs = [
        SynthSpec(
            width=args.width,
            height=args.height,
            n_targets=args.n_targets,
            n_shore_targets=args.n_shore_targets,
            target_intensity=args.target_intensity,
            noise_level=args.noise_level,
            rng_seed=args.seed + i,
            scene_id=f"synth{args.seed + i:04d}",
            with_auxiliaries=not args.no_auxiliaries,
        )
        for i in range(args.scenes)
    ]
    manifest = write_dataset(specs, config.out, args.format)
    log.info("wrote %d scene(s); manifest %s", len(specs), manifest)
    print(manifest)
    return EXIT_OK


def _write_tiles(manifest, config: PipelineConfig):
    patch_dir = config.out / "patches"
    index, discards, kept_refs = [], [], []
    for entry, _, result in _tile_manifest(manifest, config):
        index.extend(write_patches(result.patches, patch_dir))
        discards.extend(d.as_dict() for d in result.discards)
        kept_refs.extend(p.ref for p in result.patches)
        log.info("%s: %d patches, %d discarded", entry.scene_id, len(result.patches),
                 len(result.discards))
    write_jsonl(index, config.out / PATCH_INDEX)
    write_jsonl(discards, config.out / DISCARD_LOG)
    return kept_refs, discards


def cmd_tile(args, config: PipelineConfig) -> int:
    manifest = load_manifest(args.manifest)
    _write_tiles(manifest, config)
    print(config.out / PATCH_INDEX)
    return EXIT_OK


def cmd_dataset(args, config: PipelineConfig) -> int:
    manifest = load_manifest(args.manifest)
    if manifest.labels is None:
        raise ConfigError("manifest has no labels file")
    refs, discards = _write_tiles(manifest, config)
    discarded = [
        PatchRef(d["scene_id"], d["row_offset"], d["col_offset"], config.tiling.patch_size)
        for d in discards
    ]
    labels = parse_labels(manifest.labels)
    result = labels_to_annotations(labels, refs, config.annotate, discarded)
    export_annotations(result.annotations, refs, config.out / "annotations.json")
    write_drop_log(result.dropped, config.out / "drops.jsonl", result.unplaced)
    log.info("%d annotations, %d dropped, %d unplaced", len(result.annotations),
             len(result.dropped), len(result.unplaced))
    print(config.out / "annotations.json")
    return EXIT_OK


def cmd_detect(args, config: PipelineConfig) -> int:
    manifest = load_manifest(args.manifest)
    records = []
    for entry in manifest.scenes:
        scene = load_scene(entry)
        found = detect_scene(scene, config.tiling, config.refdetect, config.workers)
        log.info("%s: %d detections", entry.scene_id, len(found))
        records.extend(found)
    out = config.out / "predictions.csv"
    write_predictions(records, out)
    print(out)
    return EXIT_OK


def format_table(report: MetricsReport) -> str:
    head = f"{'F1_D':>9} {'F1_S':>9} {'F1_V':>9} {'F1_F':>9} {'Avg-F1':>9}"
    row = " ".join(f"{v:9.5f}" for v in
                   (report.f1_d, report.f1_s, report.f1_v, report.f1_f, report.avg_f1))
    lines = [head, "-" * len(head), row]
    if not report.f1_s_computable:
        lines.append(f"note: F1_S excludes {report.shore_fp_unresolved} stray prediction(s) "
                     "in scenes without a shore-distance raster")
    return "\n".join(lines)


def cmd_score(args, config: PipelineConfig) -> int:
    labels = args.labels
    if labels is None:
        if args.manifest is None:
            raise ConfigError("score needs --labels or --manifest")
        labels = load_manifest(args.manifest).labels
        if labels is None:
            raise ConfigError("manifest has no labels file; pass --labels")
    report = score_run(args.predictions, labels, args.manifest, config.score, config.workers)
    write_report(report, config.out / "report.json")
    print(format_table(report))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "tile": cmd_tile,
    "dataset": cmd_dataset,
    "detect": cmd_detect,
    "score": cmd_score,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=os.environ.get("FADSAR_LOG", "WARNING").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        config = load_config(_read_config_file(args.config), _overrides(args))
        return COMMANDS[args.command](args, config)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except SchemaError as exc:
        log.error("schema error: %s", exc)
        return EXIT_SCHEMA
    except (SceneIOError, OSError) as exc:
        log.error("io error: %s", exc)
        return EXIT_IO
    except FadsarError as exc:
        log.error("%s", exc)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())

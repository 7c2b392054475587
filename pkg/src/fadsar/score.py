"""Point-matching detection metrics: F1_D, F1_S, F1_V, F1_F and Avg-F1.

Predictions are matched one-to-one to ground-truth points inside a hard
radius. Among all maximum-cardinality matchings the one with the smallest
total distance is chosen, so results do not depend on input order.
Counts are pooled over scenes before any F1 is computed (micro-averaging).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .core import (
    Confidence,
    Counts,
    DEFAULT_PIXEL_SPACING_M,
    DetectionRecord,
    LabelRecord,
    MetricsReport,
    Raster,
)
from .errors import ConfigError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreConfig:
    match_radius_m: float = 200.0
    shore_threshold_km: float = 2.0
    beta: float = 1.0
    min_confidence_gt: Confidence = Confidence.HIGH

    def __post_init__(self):
        object.__setattr__(self, "min_confidence_gt", Confidence(self.min_confidence_gt))
        if not self.match_radius_m > 0:
            raise ConfigError("match_radius_m must be > 0")
        if not self.shore_threshold_km >= 0:
            raise ConfigError("shore_threshold_km must be >= 0")
        if not self.beta > 0:
            raise ConfigError("beta must be > 0")


@dataclass(frozen=True)
class MatchResult:
    pairs: list[tuple[int, int, float]]
    unmatched_predictions: list[int]
    unmatched_labels: list[int]

    @property
    def total_distance(self) -> float:
        return float(sum(d for _, _, d in self.pairs))


@dataclass(frozen=True)
class SceneGeometry:
    """What the scorer needs to know about a scene besides its points."""

    pixel_spacing_m: float = DEFAULT_PIXEL_SPACING_M
    height: int = 0
    width: int = 0
    shore_distance: Optional[Raster] = None


def _solve_component(dist: np.ndarray, feasible: np.ndarray):
    # Feasible cells cost d - big, infeasible 0: minimizing the sum first
    # maximizes the number of feasible pairs, then minimizes their distance.
    big = float(dist[feasible].sum()) + 1.0
    cost = np.where(feasible, dist - big, 0.0)
    rows, cols = linear_sum_assignment(cost)
    keep = feasible[rows, cols]
    return rows[keep], cols[keep]


def match_detections(
    predictions: Sequence[DetectionRecord],
    labels: Sequence[LabelRecord],
    pixel_spacing_m: float,
    config: ScoreConfig = ScoreConfig(),
) -> MatchResult:
    """Optimal one-to-one matching within ``config.match_radius_m``.

    Pairs are reported as (prediction index, label index, distance in m),
    sorted by label index. The problem is split into connected components of
    the within-radius graph, each solved exactly.
    """
    n_pred, n_lab = len(predictions), len(labels)
    if n_pred == 0 or n_lab == 0:
        return MatchResult([], list(range(n_pred)), list(range(n_lab)))
    lab_xy = np.array([(l.row, l.col) for l in labels], dtype=np.float64) * pixel_spacing_m
    pred_xy = np.array([(p.row, p.col) for p in predictions], dtype=np.float64) * pixel_spacing_m
    # slightly padded query; the exact radius test below is authoritative
    neighbours = cKDTree(lab_xy).query_ball_tree(
        cKDTree(pred_xy), config.match_radius_m * (1 + 1e-9) + 1e-9
    )
    li = np.array([i for i, js in enumerate(neighbours) for _ in js], dtype=np.int64)
    pj = np.array([j for js in neighbours for j in sorted(js)], dtype=np.int64)
    if len(li):
        d = np.hypot(*(lab_xy[li] - pred_xy[pj]).T)
        ok = d <= config.match_radius_m
        li, pj, d = li[ok], pj[ok], d[ok]

    pairs = []
    if len(li):
        graph = coo_matrix(
            (np.ones(len(li)), (li, n_lab + pj)), shape=(n_lab + n_pred, n_lab + n_pred)
        )
        _, comp = connected_components(graph, directed=False)
        edge_comp = comp[li]
        for c in np.unique(edge_comp):
            sel = edge_comp == c
            ls, ps = np.unique(li[sel]), np.unique(pj[sel])
            lpos = {v: k for k, v in enumerate(ls)}
            ppos = {v: k for k, v in enumerate(ps)}
            dist = np.zeros((len(ls), len(ps)))
            feasible = np.zeros((len(ls), len(ps)), dtype=bool)
            for a, b, dd in zip(li[sel], pj[sel], d[sel]):
                dist[lpos[a], ppos[b]] = dd
                feasible[lpos[a], ppos[b]] = True
            r, k = _solve_component(dist, feasible)
            pairs.extend((int(ps[b]), int(ls[a]), float(dist[a, b])) for a, b in zip(r, k))

    pairs.sort(key=lambda t: (t[1], t[0]))
    matched_p = {p for p, _, _ in pairs}
    matched_l = {l for _, l, _ in pairs}
    return MatchResult(
        pairs,
        [i for i in range(n_pred) if i not in matched_p],
        [i for i in range(n_lab) if i not in matched_l],
    )


def fbeta(tp: int, fp: int, fn: int, beta: float = 1.0) -> float:
    """F-beta from counts; 0.0 when there is no true positive.

    Evaluated as (1+b^2)tp / ((1+b^2)tp + b^2 fn + fp), the count form of
    (1+b^2)PR / (b^2 P + R); at b=1 this is exactly 2tp / (2tp + fp + fn).
    """
    if tp == 0:
        return 0.0
    b2 = beta * beta
    return (1.0 + b2) * tp / ((1.0 + b2) * tp + b2 * fn + fp)


def avg_f1(f1_d: float, f1_s: float, f1_v: float, f1_f: float) -> float:
    """Mean detection F1 times mean classification F1."""
    return ((f1_d + f1_s) / 2.0) * ((f1_v + f1_f) / 2.0)


@dataclass
class SceneScore:
    """Per-scene matching outcome and raw counts."""

    scene_id: str
    detection: Counts
    shore: Counts
    vessel: Counts
    fishing: Counts
    shore_fp_unresolved: int = 0
    pairs: list = field(default_factory=list)

    def as_dict(self, beta: float) -> dict:
        return {
            "f1_d": fbeta(*_t(self.detection), beta),
            "f1_s": fbeta(*_t(self.shore), beta),
            "f1_v": fbeta(*_t(self.vessel), beta),
            "f1_f": fbeta(*_t(self.fishing), beta),
            "counts": {
                "detection": self.detection.as_dict(),
                "shore": {**self.shore.as_dict(), "fp_unresolved": self.shore_fp_unresolved},
                "vessel": self.vessel.as_dict(),
                "fishing": self.fishing.as_dict(),
            },
        }


def _t(c: Counts) -> tuple[int, int, int]:
    return c.tp, c.fp, c.fn


def _sample(raster: Raster, row: int, col: int, height: int, width: int) -> Optional[float]:
    """Nearest-neighbor sample of a raster that covers the scene extent."""
    h = height or raster.height
    w = width or raster.width
    r = min(int((row + 0.5) * raster.height / h), raster.height - 1)
    c = min(int((col + 0.5) * raster.width / w), raster.width - 1)
    if r < 0 or c < 0:
        return None
    v = float(raster.values[r, c])
    if not np.isfinite(v) or v <= raster.nodata_sentinel:
        return None
    return v


def f1_detection(scores: Iterable[SceneScore], beta: float = 1.0):
    counts = sum((s.detection for s in scores), Counts())
    return fbeta(*_t(counts), beta), counts


def f1_shore(scores: Iterable[SceneScore], beta: float = 1.0):
    """Returns (f1_s, counts, computable, unresolved stray predictions)."""
    scores = list(scores)
    counts = sum((s.shore for s in scores), Counts())
    unresolved = sum(s.shore_fp_unresolved for s in scores)
    return fbeta(*_t(counts), beta), counts, unresolved == 0, unresolved


def _class_counts(pairs, pred_flag, gt_flag) -> Counts:
    tp = fp = fn = 0
    for pred, lab in pairs:
        p, g = pred_flag(pred), gt_flag(lab)
        if p and g:
            tp += 1
        elif p and not g:
            fp += 1
        elif g and not p:
            fn += 1
    return Counts(tp, fp, fn)


def vessel_counts(pairs: Iterable[tuple[DetectionRecord, LabelRecord]]) -> Counts:
    return _class_counts(
        [(p, l) for p, l in pairs if l.is_vessel is not None],
        lambda p: p.is_vessel,
        lambda l: l.is_vessel,
    )


def fishing_counts(pairs: Iterable[tuple[DetectionRecord, LabelRecord]]) -> Counts:
    return _class_counts(
        [(p, l) for p, l in pairs if l.is_vessel and l.is_fishing is not None],
        lambda p: p.is_fishing,
        lambda l: l.is_fishing,
    )


def f1_vessel(pairs, beta: float = 1.0):
    """F1 of the vessel flag over matched (prediction, label) pairs."""
    counts = vessel_counts(pairs)
    return fbeta(*_t(counts), beta), counts


def f1_fishing(pairs, beta: float = 1.0):
    """F1 of the fishing flag over matched pairs whose label is a vessel with
    a known fishing status."""
    counts = fishing_counts(pairs)
    return fbeta(*_t(counts), beta), counts


def score_scene(
    scene_id: str,
    predictions: Sequence[DetectionRecord],
    labels: Sequence[LabelRecord],
    geometry: SceneGeometry,
    config: ScoreConfig = ScoreConfig(),
) -> SceneScore:
    """Match one scene and count all four metrics.

    Every label takes part in matching. Labels below ``min_confidence_gt``
    are not scoreable: a prediction matched to one is neither TP nor FP, and
    such labels are never FN.
    """
    result = match_detections(predictions, labels, geometry.pixel_spacing_m, config)
    scoreable = [l.confidence >= config.min_confidence_gt for l in labels]
    pairs = [(p, l, d) for p, l, d in result.pairs if scoreable[l]]

    detection = Counts(
        tp=len(pairs),
        fp=len(result.unmatched_predictions),
        fn=sum(1 for l in result.unmatched_labels if scoreable[l]),
    )

    shore_raster = geometry.shore_distance
    thr = config.shore_threshold_km

    def label_close(lab: LabelRecord) -> bool:
        dist = lab.distance_from_shore_km
        if dist is None and shore_raster is not None:
            dist = _sample(shore_raster, lab.row, lab.col, geometry.height, geometry.width)
        return dist is not None and dist <= thr

    close = [label_close(l) for l in labels]
    fp_s = unresolved = 0
    for i in result.unmatched_predictions:
        if shore_raster is None:
            unresolved += 1
            continue
        p = predictions[i]
        dist = _sample(shore_raster, p.row, p.col, geometry.height, geometry.width)
        if dist is not None and dist <= thr:
            fp_s += 1
    shore = Counts(
        tp=sum(1 for _, l, _ in pairs if close[l]),
        fp=fp_s,
        fn=sum(1 for l in result.unmatched_labels if scoreable[l] and close[l]),
    )

    matched = [(predictions[p], labels[l]) for p, l, _ in pairs]
    return SceneScore(
        scene_id=scene_id,
        detection=detection,
        shore=shore,
        vessel=vessel_counts(matched),
        fishing=fishing_counts(matched),
        shore_fp_unresolved=unresolved,
        pairs=[(p, l, d) for p, l, d in pairs],
    )


SCORING_RULES = {
    "matching": "max-cardinality min-total-distance assignment within match radius",
    "averaging": "micro (counts pooled across scenes)",
    "shore_tp_fn": "label distance_from_shore_km (raster-sampled when blank)",
    "shore_fp": "shore raster sampled at the unmatched prediction pixel",
    "classification": "matched pairs only; fishing conditioned on ground-truth vessels",
    "low_confidence_matches": "ignored (neither TP nor FP)",
}


def score(
    predictions: Iterable[DetectionRecord],
    labels: Iterable[LabelRecord],
    scenes: Mapping[str, SceneGeometry],
    config: ScoreConfig = ScoreConfig(),
    workers: int = 1,
) -> MetricsReport:
    """Score predictions against labels across scenes.

    Scenes absent from ``scenes`` use the default pixel spacing and have no
    shore raster.
    """
    preds_by: dict[str, list[DetectionRecord]] = {}
    labs_by: dict[str, list[LabelRecord]] = {}
    for p in predictions:
        preds_by.setdefault(p.scene_id, []).append(p)
    for l in labels:
        labs_by.setdefault(l.scene_id, []).append(l)
    scene_ids = sorted(set(preds_by) | set(labs_by))
    for sid in scene_ids:
        if sid not in scenes:
            log.warning("scene %s not in manifest; default spacing, no shore raster", sid)

    def run(sid: str) -> SceneScore:
        return score_scene(sid, preds_by.get(sid, []), labs_by.get(sid, []),
                           scenes.get(sid, SceneGeometry()), config)

    if workers > 1 and len(scene_ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_scene = list(pool.map(run, scene_ids))
    else:
        per_scene = [run(s) for s in scene_ids]

    beta = config.beta
    f_d, c_d = f1_detection(per_scene, beta)
    f_s, c_s, computable, unresolved = f1_shore(per_scene, beta)
    c_v = sum((s.vessel for s in per_scene), Counts())
    c_f = sum((s.fishing for s in per_scene), Counts())
    f_v, f_f = fbeta(*_t(c_v), beta), fbeta(*_t(c_f), beta)
    return MetricsReport(
        f1_d=f_d,
        f1_s=f_s,
        f1_v=f_v,
        f1_f=f_f,
        avg_f1=avg_f1(f_d, f_s, f_v, f_f),
        counts={"detection": c_d, "shore": c_s, "vessel": c_v, "fishing": c_f},
        f1_s_computable=computable,
        shore_fp_unresolved=unresolved,
        per_scene={s.scene_id: s.as_dict(beta) for s in per_scene},
        rules={
            **SCORING_RULES,
            "match_radius_m": config.match_radius_m,
            "shore_threshold_km": config.shore_threshold_km,
            "beta": beta,
            "min_confidence_gt": config.min_confidence_gt.name,
        },
    )


def score_run(
    predictions_path: str | Path,
    labels_path: str | Path,
    manifest_path: Optional[str | Path] = None,
    config: ScoreConfig = ScoreConfig(),
    workers: int = 1,
) -> MetricsReport:
    """File-level scoring: predictions.csv + labels.csv (+ manifest.json)."""
    from .ingest import load_manifest, parse_labels, parse_predictions, read_raster, scene_geometry

    preds = parse_predictions(predictions_path)
    labs = parse_labels(labels_path)
    scenes: dict[str, SceneGeometry] = {}
    if manifest_path is not None:
        manifest = load_manifest(manifest_path)
        for entry in manifest.scenes:
            info = scene_geometry(entry)
            shore = read_raster(entry.shore_distance) if entry.shore_distance else None
            scenes[entry.scene_id] = SceneGeometry(
                info.pixel_spacing_m, info.height, info.width, shore
            )
    return score(preds, labs, scenes, config, workers)

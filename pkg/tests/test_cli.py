import json

import pytest

from fadsar.cli import EXIT_CONFIG, EXIT_IO, EXIT_SCHEMA, load_config, main
from fadsar.core import Confidence
from fadsar.ingest import read_report
from fadsar.preprocess import EdgePolicy


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--width", "900", "--height", "700", "--n-targets", "6",
                 "--n-shore-targets", "2", "--seed", "4", "--scenes", "2", "--out", str(out)]) == 0
    return out


def test_synth_outputs(synth_dir):
    assert (synth_dir / "manifest.json").is_file()
    assert (synth_dir / "labels.csv").read_text().count("\n") == 1 + 12
    assert (synth_dir / "synth0004" / "vv.f32").is_file()


def test_tile_writes_index_and_discards(synth_dir, tmp_path):
    assert main(["tile", str(synth_dir / "manifest.json"), "--patch-size", "400",
                 "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "patches.jsonl").read_text().splitlines()
    assert len(lines) == 2 * 3 * 2
    rec = json.loads(lines[0])
    assert (tmp_path / "patches" / rec["file"]).is_file()
    assert (tmp_path / "discards.jsonl").read_text() == ""


def test_dataset_writes_coco(synth_dir, tmp_path):
    assert main(["dataset", str(synth_dir / "manifest.json"), "--patch-size", "400",
                 "--bbox-size", "30", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "annotations.json").read_text())
    assert len(doc["annotations"]) == 12
    assert all(15 <= a["bbox"][2] <= 30 for a in doc["annotations"])
    assert (tmp_path / "drops.jsonl").is_file()


def test_detect_then_score(synth_dir, tmp_path):
    m = str(synth_dir / "manifest.json")
    assert main(["detect", m, "--out", str(tmp_path)]) == 0
    assert main(["score", str(tmp_path / "predictions.csv"), "--manifest", m,
                 "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    for k in ("f1_d", "f1_s", "f1_v", "f1_f", "avg_f1"):
        assert isinstance(doc[k], float)
    assert doc["f1_d"] == 1.0
    assert set(doc["per_scene"]) == {"synth0004", "synth0005"}


def test_perfect_detector(synth_dir, tmp_path, capsys):
    labels = synth_dir / "labels.csv"
    assert main(["score", str(labels), "--labels", str(labels), "--manifest",
                 str(synth_dir / "manifest.json"), "--out", str(tmp_path)]) == 0
    rep = read_report(tmp_path / "report.json")
    assert rep.f1_d == rep.f1_v == rep.f1_f == 1.0
    assert "Avg-F1" in capsys.readouterr().out


def test_empty_predictions(synth_dir, tmp_path):
    preds = tmp_path / "empty.csv"
    preds.write_text("scene_id,detect_scene_row,detect_scene_column,is_vessel,is_fishing,score\n")
    assert main(["score", str(preds), "--manifest", str(synth_dir / "manifest.json"),
                 "--out", str(tmp_path)]) == 0
    rep = read_report(tmp_path / "report.json")
    assert rep.f1_d == 0.0 and rep.avg_f1 == 0.0


def test_rerun_is_byte_identical(synth_dir, tmp_path):
    m = str(synth_dir / "manifest.json")
    for run in ("a", "b"):
        assert main(["dataset", m, "--patch-size", "300", "--out", str(tmp_path / run)]) == 0
        assert main(["detect", m, "--out", str(tmp_path / run)]) == 0
    for name in ("patches.jsonl", "discards.jsonl", "annotations.json", "drops.jsonl",
                 "predictions.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for f in (tmp_path / "a" / "patches").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / "patches" / f.name).read_bytes()


def test_config_precedence(tmp_path):
    cfg = load_config({"tiling": {"patch_size": 256, "edge_policy": "drop_partial"},
                       "annotate": {"min_confidence": "MEDIUM"}, "workers": 3},
                      {"tiling.patch_size": 128, "workers": None, "annotate.bbox_size": 40})
    assert cfg.tiling.patch_size == 128 and cfg.tiling.edge_policy is EdgePolicy.DROP_PARTIAL
    assert cfg.annotate.min_confidence is Confidence.MEDIUM and cfg.annotate.bbox_size == 40
    assert cfg.workers == 3
    assert load_config({}, {}).tiling.patch_size == 800


def test_config_file_used(synth_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"tiling": {"patch_size": 350}}))
    assert main(["tile", str(synth_dir / "manifest.json"), "--config", str(cfg),
                 "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "patches.jsonl").read_text().splitlines()[0])["size"] == 350


def test_exit_codes(synth_dir, tmp_path):
    m = str(synth_dir / "manifest.json")
    assert main(["tile", str(tmp_path / "missing.json")]) == EXIT_IO
    assert main(["tile", m, "--bbox-size", "7", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["tile", m, "--workers", "0", "--out", str(tmp_path)]) == EXIT_CONFIG
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text('{"tiling": {"nope": 1}}')
    assert main(["tile", m, "--config", str(bad_cfg)]) == EXIT_CONFIG
    bad = tmp_path / "bad.csv"
    bad.write_text("scene_id,detect_scene_row\nx,1\n")
    assert main(["score", str(bad), "--manifest", m, "--out", str(tmp_path)]) == EXIT_SCHEMA
    codes = {EXIT_IO, EXIT_CONFIG, EXIT_SCHEMA}
    assert len(codes) == 3 and 0 not in codes

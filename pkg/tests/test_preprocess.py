import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fadsar.core import Raster
from fadsar.errors import ConfigError, Degenerate, MissingAuxiliary
from fadsar.ingest import SynthSpec, synth_scene
from fadsar.preprocess import (
    EdgePolicy,
    FusionKind,
    FusionMethod,
    TilingPolicy,
    fuse_channels,
    load_patch,
    min_max_normalize,
    preprocess_scene,
    read_jsonl,
    tile_scene,
    write_jsonl,
    write_patches,
)

from conftest import make_scene


# -- tiling ------------------------------------------------------------------------

def test_single_window_at_default_size():
    scene = make_scene(np.random.default_rng(0).random((800, 800)))
    windows = tile_scene(scene, TilingPolicy())
    assert [(w.ref.row_offset, w.ref.col_offset) for w in windows] == [(0, 0)]


@pytest.mark.parametrize("policy, expected", [
    (EdgePolicy.PAD_REFLECT, 9), (EdgePolicy.PAD_ZERO, 9), (EdgePolicy.DROP_PARTIAL, 4)])
def test_window_counts_2000x1700(policy, expected):
    scene = make_scene(np.zeros((2000, 1700), dtype=np.float32))
    assert len(tile_scene(scene, TilingPolicy(800, policy))) == expected


def test_drop_partial_smaller_than_patch():
    scene = make_scene(np.zeros((100, 100)))
    assert tile_scene(scene, TilingPolicy(128, EdgePolicy.DROP_PARTIAL)) == []


def test_policy_invariants():
    with pytest.raises(ConfigError):
        TilingPolicy(100, stride=101)
    with pytest.raises(ConfigError):
        TilingPolicy(100, stride=0)
    assert TilingPolicy(64).stride == 64


@given(h=st.integers(1, 90), w=st.integers(1, 90), p=st.integers(1, 40))
@settings(max_examples=60, deadline=None)
def test_pad_windows_cover_scene_exactly_once(h, w, p):
    scene = make_scene(np.zeros((h, w)))
    windows = tile_scene(scene, TilingPolicy(p, EdgePolicy.PAD_ZERO))
    assert len(windows) == math.ceil(h / p) * math.ceil(w / p)
    cover = np.zeros((h, w), dtype=int)
    for win in windows:
        assert win.ref.row_offset % p == 0 and win.ref.col_offset % p == 0
        r, c = win.ref.row_offset, win.ref.col_offset
        cover[r:r + p, c:c + p] += 1
        assert win.inside.sum() == min(p, h - r) * min(p, w - c)
    assert (cover == 1).all()


def test_pad_zero_marks_padding_invalid():
    scene = make_scene(np.arange(30, dtype=np.float32).reshape(5, 6))
    win = tile_scene(scene, TilingPolicy(4, EdgePolicy.PAD_ZERO))[-1]
    assert (win.ref.row_offset, win.ref.col_offset) == (4, 4)
    assert win.vv_valid.sum() == 2
    assert win.vv[~win.vv_valid].tolist() == [0.0] * 14


def test_pad_reflect_matches_numpy_pad():
    values = np.random.default_rng(1).random((7, 9)).astype(np.float32)
    scene = make_scene(values)
    padded = np.pad(values, ((0, 3), (0, 3)), mode="reflect")
    for win in tile_scene(scene, TilingPolicy(5, EdgePolicy.PAD_REFLECT)):
        r, c = win.ref.row_offset, win.ref.col_offset
        np.testing.assert_array_equal(win.vv, padded[r:r + 5, c:c + 5])
        assert win.vv_valid.all()


def test_overlapping_stride():
    scene = make_scene(np.zeros((10, 10)))
    windows = tile_scene(scene, TilingPolicy(6, EdgePolicy.DROP_PARTIAL, stride=2))
    assert sorted({w.ref.row_offset for w in windows}) == [0, 2, 4]


# -- normalization -------------------------------------------------------------------

def test_min_max_example():
    out, mask = min_max_normalize(np.array([2.0, 4.0, 6.0]))
    assert out.tolist() == [0.0, 0.5, 1.0] and mask.all()


@pytest.mark.parametrize("values", [[5, 5, 5, 5], [np.nan, np.nan]])
def test_min_max_degenerate(values):
    with pytest.raises(Degenerate):
        min_max_normalize(np.array(values, dtype=float))


def test_min_max_all_nodata_is_degenerate():
    r = Raster(np.full((2, 2), -30000.0))
    with pytest.raises(Degenerate):
        min_max_normalize(r.values, r.valid_mask())


def test_min_max_masked_cells_zero():
    out, mask = min_max_normalize(np.array([1.0, 100.0, 3.0]), np.array([True, False, True]))
    assert out.tolist() == [0.0, 0.0, 1.0]
    assert mask.tolist() == [True, False, True]


@given(arrays(np.float32, st.integers(2, 50),
              elements=st.floats(-1e6, 1e6, width=32, allow_nan=False)))
def test_min_max_range(values):
    try:
        out, _ = min_max_normalize(values)
    except Degenerate:
        assert values.min() == values.max()
        return
    assert out.min() == 0.0 and out.max() == 1.0


# -- fusion ----------------------------------------------------------------------------

def test_mean_of_equal_inputs_is_identity():
    vv = np.array([[0.0, 0.25], [0.5, 1.0]], dtype=np.float32)
    ch, _ = fuse_channels(vv, vv.copy(), None, FusionMethod(FusionKind.MEAN_VV_VH))
    np.testing.assert_array_equal(ch, vv)


def test_diff_of_equal_inputs_is_degenerate():
    vv = np.array([0.0, 0.3, 1.0], dtype=np.float32)
    with pytest.raises(Degenerate):
        fuse_channels(vv, vv.copy(), None, FusionMethod(FusionKind.DIFF_VV_VH))


def test_mean_is_not_renormalized():
    ch, _ = fuse_channels(np.array([0.0, 1.0]), np.array([1.0, 0.0]), None, FusionMethod())
    assert ch.tolist() == [0.5, 0.5]


def test_diff_is_renormalized():
    ch, _ = fuse_channels(np.array([0.0, 1.0, 0.5]), np.array([1.0, 0.0, 0.5]), None,
                          FusionMethod(FusionKind.DIFF_VV_VH))
    assert ch.tolist() == [0.0, 1.0, 0.5]


@given(arrays(np.float32, (4, 4), elements=st.floats(0, 1, width=32)),
       arrays(np.float32, (4, 4), elements=st.floats(0, 1, width=32)))
def test_mean_fusion_symmetric(a, b):
    x, _ = fuse_channels(a, b, None, FusionMethod())
    y, _ = fuse_channels(b, a, None, FusionMethod())
    np.testing.assert_array_equal(x, y)


def test_fusion_method_parse_round_trip():
    for text in ("mean_vv_vh", "diff_vv_vh", "aux:bathymetry", "mean_aux", "mean_all",
                 "mean_aux:bathymetry,wind_speed"):
        assert str(FusionMethod.parse(text)) == text
    assert FusionMethod.parse("aux:wind_mass").auxiliaries == ("wind_quality",)
    for bad in ("aux", "mean_vv_vh:bathymetry", "sum", "aux:nope"):
        with pytest.raises(ConfigError):
            FusionMethod.parse(bad)


def test_auxiliary_nearest_neighbour_upsampling():
    rng = np.random.default_rng(3)
    aux = np.arange(16, dtype=np.float32).reshape(4, 4)
    scene = make_scene(rng.random((16, 16)), rng.random((16, 16)), aux={"bathymetry": aux})
    result = preprocess_scene(scene, TilingPolicy(16), FusionMethod.parse("aux:bathymetry"))
    ch3 = result.patches[0].channels[2]
    expected = np.kron(aux, np.ones((4, 4))) / 15.0
    np.testing.assert_allclose(ch3, expected, rtol=0, atol=1e-7)
    assert len(np.unique(ch3)) == 16


def test_mean_aux_skips_constant_auxiliary():
    rng = np.random.default_rng(4)
    scene = make_scene(rng.random((8, 8)), rng.random((8, 8)),
                       aux={"bathymetry": rng.random((4, 4)), "land_ice_mask": np.zeros((4, 4))})
    res = preprocess_scene(scene, TilingPolicy(8), FusionMethod.parse("mean_aux:bathymetry,land_ice_mask"))
    single = preprocess_scene(scene, TilingPolicy(8), FusionMethod.parse("aux:bathymetry"))
    np.testing.assert_array_equal(res.patches[0].channels[2], single.patches[0].channels[2])
    constant = preprocess_scene(scene, TilingPolicy(8), FusionMethod.parse("aux:land_ice_mask"))
    assert constant.patches == [] and constant.discards[0].reason.startswith("degenerate:channel3")


def test_mean_all_in_range(synth_small):
    scene, _ = synth_small
    res = preprocess_scene(scene, TilingPolicy(128), FusionMethod.parse("mean_all"))
    assert res.patches
    for p in res.patches:
        assert 0 <= p.channels.min() and p.channels.max() <= 1


# -- whole-scene preprocessing ----------------------------------------------------------

def test_flat_block_tile_discarded():
    spec = SynthSpec(width=400, height=400, n_targets=3, rng_seed=9, min_separation_px=30,
                     flat_blocks=((200, 200, 200, 200),))
    scene, _ = synth_scene(spec)
    res = preprocess_scene(scene, TilingPolicy(200))
    assert [(d.row_offset, d.col_offset) for d in res.discards] == [(200, 200)]
    assert res.discards[0].reason.startswith("degenerate:vv")
    assert [(p.row_offset, p.col_offset) for p in res.patches] == [(0, 0), (0, 200), (200, 0)]


def test_pure_noise_scene_all_tiles_emitted():
    scene, _ = synth_scene(SynthSpec(width=600, height=500, n_targets=0, rng_seed=1))
    res = preprocess_scene(scene, TilingPolicy(200))
    assert len(res.patches) == 9 and res.discards == []
    for p in res.patches:
        assert p.channel_spec == "mean_vv_vh"
        assert 0 <= p.channels.min() and p.channels.max() <= 1


def test_missing_auxiliary_for_every_tile(noise_scene):
    res = preprocess_scene(noise_scene, TilingPolicy(32), FusionMethod.parse("mean_aux"))
    assert res.patches == []
    assert len(res.discards) == 6
    assert {d.reason for d in res.discards} == {"missing_auxiliary:bathymetry"}


def test_fuse_channels_raises_missing_auxiliary(noise_scene):
    win = tile_scene(noise_scene, TilingPolicy(32))[0]
    with pytest.raises(MissingAuxiliary):
        fuse_channels(win.vv, win.vh, noise_scene, FusionMethod.parse("aux:wind_speed"), win)


def test_worker_count_does_not_change_output(synth_small):
    scene, _ = synth_small
    a = preprocess_scene(scene, TilingPolicy(64), workers=1)
    b = preprocess_scene(scene, TilingPolicy(64), workers=8)
    assert [p.ref for p in a.patches] == [p.ref for p in b.patches]
    for x, y in zip(a.patches, b.patches):
        assert x.channels.tobytes() == y.channels.tobytes()


def test_patch_export_round_trip(tmp_path, synth_small):
    scene, _ = synth_small
    res = preprocess_scene(scene, TilingPolicy(128))
    index = write_patches(res.patches, tmp_path / "patches")
    write_jsonl(index, tmp_path / "patches.jsonl")
    records = read_jsonl(tmp_path / "patches.jsonl")
    assert records == index
    for rec, p in zip(records, res.patches):
        q = load_patch(rec, tmp_path / "patches")
        assert q.ref == p.ref
        assert q.channels.tobytes() == p.channels.tobytes()
        assert (q.valid_mask == p.valid_mask).all()

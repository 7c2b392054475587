import numpy as np
import pytest

from fadsar.core import Raster, Scene
from fadsar.ingest import SynthSpec, synth_scene


def make_scene(vv, vh=None, scene_id="s", aux=None, shore=None, spacing=10.0):
    vv = np.asarray(vv, dtype=np.float32)
    vh = vv.copy() if vh is None else np.asarray(vh, dtype=np.float32)
    return Scene(
        scene_id,
        Raster(vv, spacing),
        Raster(vh, spacing),
        {k: Raster(np.asarray(v, dtype=np.float32), spacing) for k, v in (aux or {}).items()},
        None if shore is None else Raster(np.asarray(shore, dtype=np.float32), spacing),
    )


@pytest.fixture
def noise_scene():
    rng = np.random.default_rng(7)
    return make_scene(rng.random((64, 80)), rng.random((64, 80)))


@pytest.fixture(scope="session")
def synth_small():
    return synth_scene(SynthSpec(width=400, height=300, n_targets=5, rng_seed=3,
                                 min_separation_px=40, scene_id="small"))

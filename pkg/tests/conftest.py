from __future__ import annotations

import numpy as np
import pytest

from octnav import phantom as ph
from octnav.pipeline import PipelineConfig


def small_scene(seed: int = 0, speckle: float = 0.0, dropout: float = 0.0,
                theta_z: float = np.deg2rad(15.0), theta_y: float = np.deg2rad(20.0),
                needle: bool = True) -> ph.PhantomScene:
    """Reduced-extent scene for fast tests: 500 x 60 x 800 voxels."""
    ilm = ph.SurfaceModel(base_um=1000.0, tilt_x=0.03, tilt_y=0.02,
                          bumps=((600.0, 700.0, 500.0, -40.0),))
    rpe = ph.SurfaceModel(base_um=1280.0, tilt_x=0.03, tilt_y=0.02,
                          bumps=((600.0, 700.0, 500.0, -40.0),))
    fluid = ph.SurfaceModel(base_um=520.0)
    spec = ph.NeedleSpec(theta_z=theta_z, theta_y=theta_y,
                         tip_um=(700.0, 650.0, 400.0), length_um=1500.0) if needle else None
    return ph.PhantomScene(ilm_surface=ilm, rpe_surface=rpe, fluid_surface=fluid,
                           needle=spec, speckle_sigma=speckle,
                           bscan_dropout_prob=dropout, rng_seed=seed,
                           dims=(500, 60, 800), spacing_um=(2.5, 25.0, 3.0),
                           name="small")


@pytest.fixture(scope="session")
def clean_scene():
    return small_scene(seed=11)


@pytest.fixture(scope="session")
def clean_volume(clean_scene):
    return ph.render_volume(clean_scene)


@pytest.fixture(scope="session")
def noisy_scene():
    return small_scene(seed=12, speckle=0.15)


@pytest.fixture(scope="session")
def noisy_volume(noisy_scene):
    return ph.render_volume(noisy_scene)


@pytest.fixture()
def oracle_config():
    return PipelineConfig(segmenter="oracle", sigma_move_um=0.0)


@pytest.fixture()
def baseline_config():
    return PipelineConfig(segmenter="baseline", sigma_move_um=0.0)

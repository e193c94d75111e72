from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from octnav import phantom as ph
from octnav.registration import build_registration
from conftest import small_scene


def test_render_deterministic():
    a = ph.render_volume(small_scene(seed=5, speckle=0.2, dropout=0.1))
    b = ph.render_volume(small_scene(seed=5, speckle=0.2, dropout=0.1))
    assert np.array_equal(a.data, b.data)


def test_flat_scene_without_needle_has_identical_bscans():
    flat = ph.PhantomScene(
        ilm_surface=ph.SurfaceModel(base_um=1000.0),
        rpe_surface=ph.SurfaceModel(base_um=1300.0),
        fluid_surface=ph.SurfaceModel(base_um=500.0),
        needle=None, dims=(64, 12, 512), spacing_um=(2.5, 25.0, 3.0))
    vol = ph.render_volume(flat)
    for i in range(1, vol.dims[1]):
        assert np.array_equal(vol.native_bscan(i), vol.native_bscan(0))


def test_full_dropout_gives_zero_volume():
    vol = ph.render_volume(small_scene(seed=6, dropout=1.0))
    assert not vol.data.any()


def test_needle_outside_scan_region_rejected():
    scene = small_scene(seed=7)
    far = scene.with_needle_tip((50000.0, 50000.0, 400.0))
    with pytest.raises(ph.SceneError, match="outside"):
        ph.render_volume(far)


def test_layer_ordering_enforced():
    with pytest.raises(ph.SceneError, match="deeper"):
        ph.PhantomScene(ilm_surface=ph.SurfaceModel(base_um=1300.0),
                        rpe_surface=ph.SurfaceModel(base_um=1000.0))
    with pytest.raises(ValueError):
        dataclasses.replace(small_scene(), bscan_dropout_prob=1.5)


def test_shadow_attenuates_below_needle(clean_scene, clean_volume):
    bare = dataclasses.replace(clean_scene, needle=None)
    vol_bare = ph.render_volume(bare)
    x, y, _ = clean_scene.dims
    sx, sy = clean_scene.spacing_um[:2]
    gy, gx = np.meshgrid(np.arange(y) * sy, np.arange(x) * sx, indexing="ij")
    z_en, z_ex, hit = clean_scene.needle_chords(gx, gy)

    z_um = np.arange(clean_scene.dims[2]) * clean_scene.spacing_um[2]
    rows, cols = np.nonzero(hit)
    checked = 0
    for iy, ix in zip(rows[::37], cols[::37]):
        below = z_um > z_ex[iy, ix]
        if not below.any():
            continue
        with_needle = clean_volume.data[iy, ix, below].astype(float)
        without = vol_bare.data[iy, ix, below].astype(float)
        if without.mean() > 0:
            assert with_needle.mean() < without.mean()
            checked += 1
    assert checked > 10


def test_rendered_axis_matches_scene_pose(clean_scene):
    """Chord midpoints from the cylinder equation recover the stated pose."""
    x, y, _ = clean_scene.dims
    sx, sy = clean_scene.spacing_um[:2]
    gy, gx = np.meshgrid(np.arange(y) * sy, np.arange(x) * sx, indexing="ij")
    z_en, z_ex, hit = clean_scene.needle_chords(gx, gy)
    score = clean_scene.needle_axis_lateral_score(gx, gy)
    central = hit & (score > 0.95)
    pts = np.stack([gx[central], gy[central],
                    0.5 * (z_en[central] + z_ex[central])], axis=1)
    centered = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axis = vt[0]
    d = clean_scene.needle.direction
    assert abs(abs(axis @ d) - 1.0) < 1e-4
    # the deepest chord midpoint projected on the axis sits at the tip
    t = (pts - np.asarray(clean_scene.needle.tip_um)) @ d
    assert t.max() < 1.0 and t.max() > -30.0


def test_apply_translation_exact_without_noise():
    robot = ph.SimulatedRobot(tip_robot_um=(0.0, 0.0, 0.0), frame_theta_z=0.3,
                              sigma_move_um=0.0)
    robot.apply_translation((500.0, 0.0, 0.0))
    assert np.array_equal(robot.tip_robot_um, [500.0, 0.0, 0.0])
    robot.apply_translation((0.0, 0.0, 0.0))
    assert np.array_equal(robot.tip_robot_um, [500.0, 0.0, 0.0])


def test_translation_noise_band():
    """Mean per-move Euclidean error stays in the [1, 12] um band at sigma 5."""
    robot = ph.SimulatedRobot(tip_robot_um=(0.0, 0.0, 0.0), frame_theta_z=0.0,
                              sigma_move_um=5.0, rng_seed=123)
    errors = []
    for axis in range(3):
        for _ in range(10):
            before = robot.tip_robot_um.copy()
            cmd = np.zeros(3)
            cmd[axis] = 500.0
            robot.apply_translation(cmd)
            errors.append(np.linalg.norm(robot.tip_robot_um - before - cmd))
    mean = float(np.mean(errors))
    assert 1.0 <= mean <= 12.0


def test_reacquire_unmoved_is_identical(clean_scene, clean_volume):
    robot = ph.SimulatedRobot.from_scene(clean_scene, sigma_move_um=0.0)
    vol = ph.reacquire(clean_scene, robot)
    assert np.array_equal(vol.data, clean_volume.data)


def test_reacquire_after_descent_moves_tip_deeper(clean_scene):
    """A volume-frame +Z command (in air) deepens the optical tip tip-for-tip."""
    robot = ph.SimulatedRobot.from_scene(clean_scene, sigma_move_um=0.0)
    before = robot.tip_optical_um(clean_scene)
    reg = build_registration(clean_scene.needle.theta_z)
    robot.apply_translation(reg.matrix.T @ np.array([0.0, 0.0, 40.0]))
    after = robot.tip_optical_um(clean_scene)
    assert np.allclose(after - before, [0.0, 0.0, 40.0], atol=1e-9)
    synced = robot.sync_scene(clean_scene)
    assert np.allclose(np.asarray(synced.needle.tip_um) - np.asarray(clean_scene.needle.tip_um),
                       [0.0, 0.0, 40.0], atol=1e-9)


def test_reacquire_out_of_region_errors(clean_scene):
    robot = ph.SimulatedRobot.from_scene(clean_scene, sigma_move_um=0.0)
    robot.apply_translation((90000.0, 0.0, 0.0))
    with pytest.raises(ph.SceneError):
        ph.reacquire(clean_scene, robot)


def test_optical_physical_roundtrip(clean_scene):
    rng = np.random.default_rng(0)
    ex, ey, ez = clean_scene.extent_um
    for _ in range(50):
        p = np.array([rng.uniform(0, ex), rng.uniform(0, ey), rng.uniform(0, ez)])
        q = clean_scene.optical_from_physical(clean_scene.physical_from_optical(p))
        assert np.allclose(q, p, atol=1e-9)


def test_optical_warp_scales_by_index_below_fluid(clean_scene):
    x, y = 600.0, 700.0
    fluid = clean_scene.fluid_surface.depth_um(x, y)
    p1 = clean_scene.optical_from_physical((x, y, fluid + 10.0))
    p2 = clean_scene.optical_from_physical((x, y, fluid + 20.0))
    n_vit = clean_scene.media.n_vitreous
    assert abs((p2[2] - p1[2]) - n_vit * 10.0) < 1e-9
    # above the fluid the map is the identity
    a = clean_scene.optical_from_physical((x, y, fluid - 50.0))
    assert abs(a[2] - (fluid - 50.0)) < 1e-12


def test_scene_json_roundtrip(noisy_scene):
    restored = ph.scene_from_json(ph.scene_to_json(noisy_scene))
    assert restored == noisy_scene


def test_default_scene_matches_production_geometry():
    scene = ph.default_scene()
    assert scene.dims == (1000, 100, 1024)
    assert scene.spacing_um == (2.5, 25.0, 3.0)

"""Acceptance suite: one test per criterion, each printing its PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.  Everything here is
headless and deterministic (fixed seeds); tolerances are stated inline.
"""

from __future__ import annotations

import dataclasses
import time

import numpy as np
import pytest

from octnav import phantom as ph
from octnav.pipeline import (PipelineConfig, benchmark, run_trial, voxel_diagonal_um)
from octnav.pose import compose_pose, estimate_axial, estimate_inplane
from octnav.projection import AxialProjectionImage
from octnav.registration import build_registration, robot_to_volume, volume_to_robot
from octnav.slicing import (PlaneSpec, frame_only_bscan, tool_aligned_plane,
                            virtual_bscan)
from octnav.trajectory import (MediaIndices, MediaRegion, MediaStack, plan_trajectory,
                               refraction_correct)
from octnav.volume import IoctVolume

VOXEL_DIAG_UM = voxel_diagonal_um((2.5, 25.0, 3.0))        # ~25.3 um


def _report(name: str, ok: bool, detail: str = "") -> None:
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}"
          + (f"  ({detail})" if detail else ""))


def trial_scene(i: int, speckle: float, base_seed: int):
    rng = np.random.default_rng([base_seed, i])
    theta_z = np.deg2rad(rng.uniform(-35.0, 35.0))
    theta_y = np.deg2rad(rng.uniform(12.0, 30.0))
    tip = (rng.uniform(1100.0, 1500.0), rng.uniform(900.0, 1500.0),
           rng.uniform(600.0, 800.0))
    scene = ph.default_scene(seed=1000 + i, speckle_sigma=speckle,
                             theta_z=theta_z, theta_y=theta_y, tip_um=tip,
                             name=f"trial-{i}")
    return scene, rng


def sample_target(scene: ph.PhantomScene, rng, band: str) -> np.ndarray:
    n = scene.needle
    tip = np.asarray(n.tip_um)
    adv = n.direction[:2] / np.linalg.norm(n.direction[:2])
    lat = tip[:2] + adv * rng.uniform(350.0, 700.0)
    ilm = scene.ilm_surface.depth_um(*lat)
    rpe = scene.rpe_surface.depth_um(*lat)
    fluid = scene.fluid_surface.depth_um(*lat)
    if band == "above":
        z = rng.uniform(fluid + 60.0, ilm - 70.0)
    elif band == "inside":
        z = rng.uniform(ilm + 40.0, rpe - 25.0)
    else:                                   # near the RPE
        z = rpe - 30.0
    return np.array([lat[0], lat[1], z])


def test_closed_loop_oracle_accuracy():
    """20 oracle trials, zero robot noise, targets above and inside the retina:
    every final error within one voxel diagonal; total runtime under 2 min."""
    t0 = time.perf_counter()
    errors = []
    for i in range(20):
        scene, rng = trial_scene(i, speckle=0.0, base_seed=42)
        band = "above" if i % 2 == 0 else "inside"
        target = sample_target(scene, rng, band)
        cfg = PipelineConfig(segmenter="oracle", sigma_move_um=0.0)
        rec = run_trial(scene, target, cfg, trial_id=f"c1-{i}")
        assert rec.failure_stage is None, f"trial {i} failed at {rec.failure_stage}"
        errors.append(rec.error_um)
    elapsed = time.perf_counter() - t0
    ok = max(errors) <= VOXEL_DIAG_UM and elapsed < 120.0
    _report("closed-loop-oracle", ok,
            f"max {max(errors):.2f} um of {VOXEL_DIAG_UM:.1f}, {elapsed:.0f}s")
    assert max(errors) <= VOXEL_DIAG_UM
    assert elapsed < 120.0


def test_reference_bracketing_accuracy():
    """Baseline segmenter with 5 um robot noise lands in the accuracy bands
    bracketing the reference in-air (24 +/- 5 um) and in-tissue (32 +/- 4 um)
    results."""
    means = {}
    for band, base_seed, lo, hi in (("above", 43, 10.0, 40.0),
                                    ("rpe", 44, 15.0, 50.0)):
        errors = []
        for i in range(10):
            scene, rng = trial_scene(100 + i, speckle=0.15, base_seed=base_seed)
            target = sample_target(scene, rng, band)
            cfg = PipelineConfig(segmenter="baseline", sigma_move_um=5.0,
                                 rng_seed=500 + i)
            rec = run_trial(scene, target, cfg, trial_id=f"c2-{band}-{i}")
            assert rec.failure_stage is None
            errors.append(rec.error_um)
        means[band] = float(np.mean(errors))
        assert lo <= means[band] <= hi, f"{band}: mean {means[band]:.1f} not in [{lo},{hi}]"
    _report("reference-bracketing", True,
            f"above {means['above']:.1f} um in [10,40]; "
            f"near-RPE {means['rpe']:.1f} um in [15,50]")


def test_robot_repeatability():
    """10 noisy 500 um moves per axis: mean per-move error in [1, 12] um."""
    robot = ph.SimulatedRobot(tip_robot_um=(0.0, 0.0, 0.0), frame_theta_z=0.0,
                              sigma_move_um=5.0, rng_seed=2024)
    errors = []
    for axis in range(3):
        for _ in range(10):
            before = robot.tip_robot_um.copy()
            cmd = np.zeros(3)
            cmd[axis] = 500.0
            robot.apply_translation(cmd)
            errors.append(np.linalg.norm(robot.tip_robot_um - before - cmd))
    mean = float(np.mean(errors))
    ok = 1.0 <= mean <= 12.0
    _report("robot-repeatability", ok, f"mean per-move error {mean:.2f} um")
    assert ok


def test_pose_estimation_grid():
    """Oracle masks over theta_z in [-60, 60] x theta_y in [5, 45] (5 deg
    steps): angle errors <= 1 deg and tip error <= 1 voxel diagonal at all
    225 grid points."""
    base = ph.default_scene()
    extent = ((base.dims[0] - 1) * 2.5, (base.dims[1] - 1) * 25.0)
    tip_gt = np.array([1250.0, 1230.0, 650.0])
    proj = AxialProjectionImage(pixels=np.zeros((100, 1000)), operator="mean",
                                spacing_xy_um=(2.5, 25.0))
    worst = {"dz": 0.0, "dy": 0.0, "tip": 0.0}
    count = 0
    for tz_deg in range(-60, 61, 5):
        for ty_deg in range(5, 46, 5):
            tz, ty = np.deg2rad(tz_deg), np.deg2rad(ty_deg)
            scene = dataclasses.replace(base, needle=ph.NeedleSpec(
                theta_z=tz, theta_y=ty, tip_um=tuple(tip_gt)))
            seg = ph.OracleSegmenter(scene)
            inp = estimate_inplane(seg.segment_projection(proj), 0.01, (2.5, 25.0))
            plane = tool_aligned_plane(inp.theta_z, *inp.tip_lateral_um,
                                       lateral_extent_um=extent)
            bs = frame_only_bscan(scene.dims, scene.spacing_um, plane)
            ax = estimate_axial(seg.segment_bscan(bs)["needle"], 0.01,
                                bs.frame.su_um, bs.frame.sz_um)
            pose = compose_pose(inp.theta_z, ax.theta_y,
                                (inp.tip_lateral_um[0], inp.tip_lateral_um[1],
                                 ax.tip_z_um))
            dz = abs(np.rad2deg(pose.theta_z - tz))
            dy = abs(np.rad2deg(pose.theta_y - ty))
            tip_err = float(np.linalg.norm(pose.tip_um - tip_gt))
            worst["dz"] = max(worst["dz"], dz)
            worst["dy"] = max(worst["dy"], dy)
            worst["tip"] = max(worst["tip"], tip_err)
            assert dz <= 1.0 and dy <= 1.0, f"angles off at ({tz_deg},{ty_deg})"
            assert tip_err <= VOXEL_DIAG_UM, f"tip off at ({tz_deg},{ty_deg})"
            count += 1
    assert count == 225
    _report("pose-grid", True,
            f"225/225 points; worst dz {worst['dz']:.2f} deg, "
            f"dy {worst['dy']:.2f} deg, tip {worst['tip']:.1f} um")


def test_geometry_invariant_suite():
    """Decomposition, registration, rotation, and refraction identities hold
    to 1e-9 (relative where stated)."""
    rng = np.random.default_rng(7)
    # trajectory decomposition identities on random poses/targets
    for _ in range(200):
        pose = compose_pose(rng.uniform(-1.2, 1.2), rng.uniform(0.15, 1.3),
                            rng.uniform(0, 2000, 3))
        target = pose.tip_um + pose.direction * rng.uniform(50, 800) \
            + np.array([rng.uniform(-300, 300), rng.uniform(-300, 300), 0.0])
        if (target - pose.tip_um) @ pose.direction <= 1e-6:
            continue
        try:
            plan = plan_trajectory(pose, target)
        except Exception:
            continue
        scale = max(1.0, np.linalg.norm(target - pose.tip_um))
        assert np.linalg.norm(plan.t_a_um + plan.t_b_um - (target - pose.tip_um)) < 1e-9 * scale
        assert abs(plan.t_a_um[2]) < 1e-9
        assert np.linalg.norm(np.cross(plan.t_b_um, plan.direction)) < 1e-9 * scale

    # registration isometry and round trip
    for _ in range(200):
        reg = build_registration(rng.uniform(-np.pi, np.pi))
        t_v = rng.uniform(-1000, 1000, 3)
        t_r = volume_to_robot(reg, t_v)
        assert abs(np.linalg.norm(t_r) - np.linalg.norm(t_v)) < 1e-9 * max(1, np.linalg.norm(t_v))
        assert np.max(np.abs(robot_to_volume(reg, t_r) - t_v)) < 1e-9 * max(1, np.abs(t_v).max())

    # rotation orthonormality
    for _ in range(200):
        r = compose_pose(rng.uniform(-2, 2), rng.uniform(-1.4, 1.4), (0, 0, 0)).rotation
        assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-9
        assert abs(np.linalg.det(r) - 1.0) < 1e-9

    # refraction identity and the 138 -> 100 um scaling
    unity = MediaStack(regions=(MediaRegion("m", 1.0, 0.0),), z_end_um=1e4)
    vitreous = MediaStack(regions=(MediaRegion("m", 1.38, 0.0),), z_end_um=1e4)
    t_b = np.array([12.0, -7.0, 345.0])
    assert np.max(np.abs(refraction_correct(t_b, np.zeros(3), unity) - t_b)) < 1e-9 * 345
    corr = refraction_correct(np.array([0.0, 0.0, 138.0]), np.zeros(3), vitreous)
    assert abs(corr[2] - 100.0) < 1e-9 * 100.0
    _report("geometry-invariants", True)


def test_slicing_equivalence():
    """All 100 native planes of a random phantom reproduce bit for bit through
    the virtual path; lateral-linear fields interpolate exactly (1e-6 rel)."""
    scene = ph.default_scene(seed=77, speckle_sigma=0.2, dropout_prob=0.05)
    vol = ph.render_volume(scene)
    sy = vol.spacing_um[1]
    for i in range(vol.dims[1]):
        plane = PlaneSpec(point_um=np.array([0.0, i * sy, 0.0]),
                          normal=np.array([0.0, 1.0, 0.0]))
        sl = virtual_bscan(vol, plane)
        assert np.array_equal(sl.image, vol.native_bscan(i).T.astype(np.float64)), i

    x, y, z = 256, 64, 8
    vals = (np.arange(x)[None, :, None] + 2 * np.arange(y)[:, None, None]
            ) * np.ones((1, 1, z))
    lin = IoctVolume(data=vals.astype(np.uint16), spacing_um=(2.5, 25.0, 3.0))
    for deg in (15.0, 30.0, 45.0, -40.0):
        plane = tool_aligned_plane(np.deg2rad(deg), 300.0, 800.0)
        sl = virtual_bscan(lin, plane)
        pos = sl.frame.column_positions()
        expected = pos[:, 0] / 2.5 + 2 * (pos[:, 1] / 25.0)
        v = sl.valid_columns
        rel = np.abs(sl.image[0, v] - expected[v]) / np.maximum(1.0, np.abs(expected[v]))
        assert rel.max() < 1e-6
    _report("slicing-equivalence", True, "100/100 native planes bit-exact")


def test_latency_budget():
    """Estimate stage mean < 232 ms and plan stage mean < 188 ms over 20
    repetitions at the default volume size (baseline segmenter)."""
    scene = ph.default_scene(seed=5, speckle_sigma=0.15)
    cfg = PipelineConfig(segmenter="baseline", sigma_move_um=0.0)
    rep = benchmark(scene, cfg, repetitions=20)
    est_mean, plan_mean = rep.estimate_ms[0], rep.plan_ms[0]
    ok = est_mean < 232.0 and plan_mean < 188.0
    _report("latency", ok,
            f"estimate {est_mean:.0f} +/- {rep.estimate_ms[1]:.0f} ms (< 232); "
            f"plan {plan_mean:.0f} +/- {rep.plan_ms[1]:.0f} ms (< 188)")
    assert est_mean < 232.0
    assert plan_mean < 188.0

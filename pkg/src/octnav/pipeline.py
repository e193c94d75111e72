"""Workflow orchestration: estimate -> plan -> execute, trials, and timing.

Each stage failure is attributed to exactly one named stage via
``StageError``.  A trial is fully deterministic given (scene, config, seeds);
re-running a logged trial reproduces the recorded error.  Wall-clock timings
use a monotonic clock, and acquisition (phantom rendering) time is kept
separate from the processing stages since it is the simulator's stand-in for
the microscope's own bottleneck.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from octnav import phantom as ph
from octnav import pose as pose_mod
from octnav import trajectory as traj
from octnav.projection import axial_projection, AxialProjectionImage
from octnav.registration import build_registration, volume_to_robot
from octnav.segmentation import (BaselineSegmenter, BaselineParams,
                                 extract_layer_boundaries, LayerBoundaries)
from octnav.slicing import tool_aligned_plane, virtual_bscan, VirtualBScan
from octnav.trajectory import (MediaIndices, build_media_stack, plan_trajectory,
                               refraction_correct, second_virtual_bscan, InsertionPlan,
                               PlanningError)
from octnav.volume import IoctVolume


def voxel_diagonal_um(spacing_um) -> float:
    return float(np.linalg.norm(np.asarray(spacing_um, dtype=np.float64)))


class StageError(RuntimeError):
    """A pipeline failure attributed to one named stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    segmenter: str = "baseline"
    confidence_fraction: float = 0.01
    bscan_fraction: float = 0.01
    huber_delta: float = 1.345
    entry_border: str = "-x"
    media: MediaIndices = field(default_factory=MediaIndices)
    media_margin_um: float = 0.0
    sigma_move_um: float = 5.0
    reacquire_between: bool = False
    rng_seed: int = 0
    z_window: tuple | None = None
    success_threshold_um: float | None = None
    baseline: BaselineParams = field(default_factory=BaselineParams)

    def to_json(self) -> str:
        obj = asdict(self)
        return json.dumps(obj, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        obj = json.loads(text)
        if "media" in obj:
            obj["media"] = MediaIndices(**obj["media"])
        if "baseline" in obj:
            obj["baseline"] = BaselineParams(**obj["baseline"])
        if obj.get("z_window") is not None:
            obj["z_window"] = tuple(obj["z_window"])
        return cls(**obj)


def make_segmenter(config: PipelineConfig, scene: ph.PhantomScene | None = None):
    if config.segmenter == "baseline":
        return BaselineSegmenter(config.baseline)
    if config.segmenter == "oracle":
        if scene is None:
            raise ValueError("oracle segmenter needs a phantom scene")
        return ph.OracleSegmenter(scene)
    raise ValueError(f"unknown segmenter {config.segmenter!r} (oracle | baseline)")


@dataclass
class EstimateResult:
    pose: pose_mod.NeedlePose
    bscan: VirtualBScan
    projection: AxialProjectionImage
    projection_mask: object
    slice_masks: dict
    inplane: pose_mod.InPlaneEstimate
    axial: pose_mod.AxialEstimate


def _run_stage(name: str, fn):
    try:
        return fn()
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def estimate(volume: IoctVolume, config: PipelineConfig, segmenter) -> EstimateResult:
    """Full pose estimation: projection, slice composition, and the two fits."""
    proj = _run_stage("axial_projection",
                      lambda: axial_projection(volume, "mean", z_window=config.z_window))
    proj_mask = _run_stage("segment_projection", lambda: segmenter.segment_projection(proj))
    inplane = _run_stage("estimate_inplane", lambda: pose_mod.estimate_inplane(
        proj_mask, config.confidence_fraction, proj.spacing_xy_um,
        entry_border=config.entry_border, delta=config.huber_delta))
    plane = _run_stage("tool_aligned_plane", lambda: tool_aligned_plane(
        inplane.theta_z, inplane.tip_lateral_um[0], inplane.tip_lateral_um[1],
        lateral_extent_um=volume.extent_um))
    bscan = _run_stage("virtual_bscan", lambda: virtual_bscan(volume, plane))
    masks = _run_stage("segment_bscan", lambda: segmenter.segment_bscan(bscan))
    axial = _run_stage("estimate_axial", lambda: pose_mod.estimate_axial(
        masks["needle"], config.bscan_fraction, bscan.frame.su_um, bscan.frame.sz_um,
        delta=config.huber_delta))
    needle_pose = _run_stage("compose_pose", lambda: pose_mod.compose_pose(
        inplane.theta_z, axial.theta_y,
        (inplane.tip_lateral_um[0], inplane.tip_lateral_um[1], axial.tip_z_um)))
    return EstimateResult(pose=needle_pose, bscan=bscan, projection=proj,
                          projection_mask=proj_mask, slice_masks=masks,
                          inplane=inplane, axial=axial)


@dataclass
class PlanResult:
    plan: InsertionPlan
    media: traj.MediaStack
    boundaries: LayerBoundaries
    target_bscan: VirtualBScan
    registration: object


def plan(pose: pose_mod.NeedlePose, target_um, volume: IoctVolume,
         config: PipelineConfig, segmenter) -> PlanResult:
    """Build the second virtual B-scan, the media stack, and the robot commands."""
    target = np.asarray(target_um, dtype=np.float64)
    if not volume.contains_metric(target):
        raise StageError("plan_target", ValueError(f"target {target} um outside the volume"))

    plane2 = _run_stage("second_virtual_bscan", lambda: second_virtual_bscan(
        target, pose.theta_z, lateral_extent_um=volume.extent_um))
    bscan2 = _run_stage("virtual_bscan", lambda: virtual_bscan(volume, plane2))
    masks2 = _run_stage("segment_bscan", lambda: segmenter.segment_bscan(bscan2))
    boundaries = _run_stage("extract_layer_boundaries", lambda: extract_layer_boundaries(
        masks2["ilm"], masks2["rpe"]))

    def build_stack():
        col = int(round(bscan2.frame.lateral_to_column(target[:2])))
        col = min(max(col, 0), bscan2.frame.width - 1)
        idx = _nearest_valid_column(boundaries.valid, col)
        if idx is None:
            raise PlanningError("no valid layer boundaries near the target column")
        ilm_um, rpe_um = (boundaries.ilm_z[idx] * bscan2.frame.sz_um,
                          boundaries.rpe_z[idx] * bscan2.frame.sz_um)
        fluid = segmenter.fluid_depths(bscan2)[idx]
        fluid_um = None if np.isnan(fluid) else float(fluid)
        return build_media_stack(fluid_um, float(ilm_um), float(rpe_um),
                                 config.media, margin_um=config.media_margin_um)

    media = _run_stage("build_media_stack", build_stack)
    core = _run_stage("plan_trajectory", lambda: plan_trajectory(pose, target))
    t_b_corr = _run_stage("refraction_correct", lambda: refraction_correct(
        core.t_b_um, core.j_um, media))
    reg = _run_stage("build_registration", lambda: build_registration(pose.theta_z))
    cmd_a = volume_to_robot(reg, core.t_a_um)
    cmd_b = volume_to_robot(reg, t_b_corr)

    full = InsertionPlan(target_um=core.target_um, tip_um=core.tip_um,
                         direction=core.direction, j_um=core.j_um,
                         t_a_um=core.t_a_um, t_b_um=core.t_b_um,
                         t_b_corrected_um=t_b_corr,
                         robot_cmd_a_um=cmd_a, robot_cmd_b_um=cmd_b)
    return PlanResult(plan=full, media=media, boundaries=boundaries,
                      target_bscan=bscan2, registration=reg)


def _nearest_valid_column(valid: np.ndarray, col: int, window: int = 40):
    if valid[col]:
        return col
    idx = np.flatnonzero(valid)
    if idx.size == 0:
        return None
    best = idx[np.argmin(np.abs(idx - col))]
    return int(best) if abs(best - col) <= window else None


@dataclass
class TrialRecord:
    trial_id: str
    scene: str
    target_um: np.ndarray
    error_um: float
    final_tip_um: np.ndarray
    t_acquire_ms: float
    t_estimate_ms: float
    t_plan_ms: float
    t_execute_ms: float
    segmenter: str
    sigma_move_um: float
    success: bool
    failure_stage: str | None = None
    pose: pose_mod.NeedlePose | None = None
    plan: InsertionPlan | None = None

    CSV_COLUMNS = ("trial_id", "scene", "target_x_um", "target_y_um", "target_z_um",
                   "error_um", "t_estimate_ms", "t_plan_ms", "t_execute_ms",
                   "segmenter", "sigma_move")

    def csv_row(self) -> list:
        t = np.asarray(self.target_um, dtype=np.float64)
        return [self.trial_id, self.scene, repr(float(t[0])), repr(float(t[1])),
                repr(float(t[2])), repr(float(self.error_um)),
                f"{self.t_estimate_ms:.3f}", f"{self.t_plan_ms:.3f}",
                f"{self.t_execute_ms:.3f}", self.segmenter, repr(self.sigma_move_um)]

    def to_json(self) -> str:
        return json.dumps({
            "trial_id": self.trial_id,
            "scene": self.scene,
            "target_um": np.asarray(self.target_um).tolist(),
            "error_um": float(self.error_um),
            "final_tip_um": np.asarray(self.final_tip_um).tolist(),
            "t_acquire_ms": self.t_acquire_ms,
            "t_estimate_ms": self.t_estimate_ms,
            "t_plan_ms": self.t_plan_ms,
            "t_execute_ms": self.t_execute_ms,
            "segmenter": self.segmenter,
            "sigma_move_um": self.sigma_move_um,
            "success": self.success,
            "failure_stage": self.failure_stage,
            "pose": None if self.pose is None else json.loads(self.pose.to_json()),
            "plan": None if self.plan is None else json.loads(self.plan.to_json()),
        })


def append_trial_log(record: TrialRecord, path) -> None:
    """Append one row to the trial CSV, writing the header on first use."""
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(TrialRecord.CSV_COLUMNS)
        writer.writerow(record.csv_row())


def execute(robot: ph.SimulatedRobot, plan_result: PlanResult, scene: ph.PhantomScene,
            config: PipelineConfig, segmenter=None) -> tuple[np.ndarray, float]:
    """Command the aligned move, then the corrected advance; return the final
    ground-truth tip (optical volume frame) and the remaining target error."""
    p = plan_result.plan
    robot.apply_translation(p.robot_cmd_a_um)
    if config.reacquire_between:
        if segmenter is None:
            raise ValueError("re-acquisition needs a segmenter")
        vol = ph.reacquire(scene, robot)
        est = estimate(vol, config, segmenter)
        replanned = plan(est.pose, p.target_um, vol, config, segmenter)
        robot.apply_translation(replanned.plan.robot_cmd_b_um)
    else:
        robot.apply_translation(p.robot_cmd_b_um)
    final_tip = robot.tip_optical_um(scene)
    error = float(np.linalg.norm(final_tip - p.target_um))
    return final_tip, error


def run_trial(scene: ph.PhantomScene, target_um, config: PipelineConfig,
              trial_id: str = "trial-0", robot_seed: int | None = None,
              log_path=None) -> TrialRecord:
    """One closed-loop navigation trial against the phantom."""
    segmenter = make_segmenter(config, scene)
    robot = ph.SimulatedRobot.from_scene(
        scene, sigma_move_um=config.sigma_move_um,
        rng_seed=config.rng_seed if robot_seed is None else robot_seed)

    t0 = time.perf_counter()
    volume = ph.render_volume(scene)
    t1 = time.perf_counter()

    failure_stage = None
    pose = None
    plan_obj = None
    error = float("nan")
    final_tip = np.full(3, np.nan)
    t_est = t_plan = t_exec = 0.0
    try:
        est = estimate(volume, config, segmenter)
        t2 = time.perf_counter()
        t_est = (t2 - t1) * 1e3
        pose = est.pose

        planned = plan(est.pose, target_um, volume, config, segmenter)
        t3 = time.perf_counter()
        t_plan = (t3 - t2) * 1e3
        plan_obj = planned.plan

        final_tip, error = execute(robot, planned, scene, config, segmenter)
        t_exec = (time.perf_counter() - t3) * 1e3
    except StageError as exc:
        failure_stage = exc.stage

    threshold = (config.success_threshold_um if config.success_threshold_um is not None
                 else voxel_diagonal_um(scene.spacing_um))
    success = failure_stage is None and np.isfinite(error) and error <= threshold
    record = TrialRecord(
        trial_id=trial_id, scene=scene.name, target_um=np.asarray(target_um, float),
        error_um=error, final_tip_um=final_tip,
        t_acquire_ms=(t1 - t0) * 1e3, t_estimate_ms=t_est, t_plan_ms=t_plan,
        t_execute_ms=t_exec, segmenter=config.segmenter,
        sigma_move_um=config.sigma_move_um, success=success,
        failure_stage=failure_stage, pose=pose, plan=plan_obj)
    if log_path is not None:
        append_trial_log(record, log_path)
    return record


@dataclass
class BenchmarkReport:
    estimate_ms: tuple[float, float]    # mean, sd
    plan_ms: tuple[float, float]
    acquire_ms: tuple[float, float]
    repetitions: int

    def to_json(self) -> str:
        return json.dumps({
            "repetitions": self.repetitions,
            "estimate_ms": {"mean": self.estimate_ms[0], "sd": self.estimate_ms[1]},
            "plan_ms": {"mean": self.plan_ms[0], "sd": self.plan_ms[1]},
            "acquire_ms": {"mean": self.acquire_ms[0], "sd": self.acquire_ms[1]},
        }, indent=2)


def _mean_sd(samples) -> tuple[float, float]:
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size <= 1:
        return (float(arr.mean()) if arr.size else 0.0, 0.0)
    return float(arr.mean()), float(arr.std(ddof=1))


def benchmark(scene: ph.PhantomScene, config: PipelineConfig,
              repetitions: int = 20, target_um=None) -> BenchmarkReport:
    """Wall-clock mean and sd for the estimate and plan stages."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    segmenter = make_segmenter(config, scene)

    acq, est_t, plan_t = [], [], []
    t0 = time.perf_counter()
    volume = ph.render_volume(scene)
    acq.append((time.perf_counter() - t0) * 1e3)

    est = estimate(volume, config, segmenter)
    if target_um is None:
        target_um = _default_benchmark_target(est.pose, scene)

    for _ in range(repetitions):
        t0 = time.perf_counter()
        est = estimate(volume, config, segmenter)
        t1 = time.perf_counter()
        plan(est.pose, target_um, volume, config, segmenter)
        t2 = time.perf_counter()
        est_t.append((t1 - t0) * 1e3)
        plan_t.append((t2 - t1) * 1e3)

    return BenchmarkReport(estimate_ms=_mean_sd(est_t), plan_ms=_mean_sd(plan_t),
                           acquire_ms=_mean_sd(acq), repetitions=repetitions)


def _default_benchmark_target(pose: pose_mod.NeedlePose, scene: ph.PhantomScene):
    """A reachable point a few hundred micrometres ahead of and below the tip."""
    step = pose.direction * 400.0
    target = pose.tip_um + step + np.array([0.0, 0.0, 150.0])
    ex, ey, ez = scene.extent_um
    return np.clip(target, [0, 0, 0], [ex, ey, ez])

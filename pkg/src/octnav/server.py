"""HTTP JSON API for the operator console.

One navigation session per server (single-writer state machine): the surgeon
views the projection and slices, posts a target to preview the plan, and
approves execution explicitly.  Read-only image endpoints stay available
while a session runs; target/approve commands are serialized through a lock.

All geometry is in micrometres in the volume frame; angles are radians.
"""

from __future__ import annotations

import json
import threading
import time

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from octnav import phantom as ph
from octnav import pipeline as pl
from octnav.images import to_png_bytes
from octnav.projection import axial_projection
from octnav.slicing import tool_aligned_plane, virtual_bscan, SlicePlaneError


class TargetRequest(BaseModel):
    x: float
    y: float
    z: float


class Session:
    def __init__(self, scene: ph.PhantomScene, config: pl.PipelineConfig, log_path=None):
        self.scene = scene
        self.config = config
        self.log_path = log_path
        self.segmenter = pl.make_segmenter(config, scene)
        self.robot = ph.SimulatedRobot.from_scene(
            scene, sigma_move_um=config.sigma_move_um, rng_seed=config.rng_seed)
        self.volume = ph.reacquire(scene, self.robot)
        self.lock = threading.Lock()
        self.status = "idle"
        self.estimate: pl.EstimateResult | None = None
        self.planned: pl.PlanResult | None = None
        self.target: np.ndarray | None = None
        self.trials: dict[str, pl.TrialRecord] = {}
        self._counter = 0
        self._timings = {"estimate_ms": 0.0, "plan_ms": 0.0}

    def ensure_estimate(self) -> pl.EstimateResult:
        with self.lock:
            if self.estimate is None:
                t0 = time.perf_counter()
                self.estimate = pl.estimate(self.volume, self.config, self.segmenter)
                self._timings["estimate_ms"] = (time.perf_counter() - t0) * 1e3
            return self.estimate

    def set_target(self, target_um) -> pl.PlanResult:
        est = self.ensure_estimate()
        with self.lock:
            if self.status == "executing":
                raise HTTPException(409, "a trial is executing")
            t0 = time.perf_counter()
            self.planned = pl.plan(est.pose, target_um, self.volume,
                                   self.config, self.segmenter)
            self._timings["plan_ms"] = (time.perf_counter() - t0) * 1e3
            self.target = np.asarray(target_um, dtype=np.float64)
            self.status = "planned"
            return self.planned

    def approve(self) -> pl.TrialRecord:
        with self.lock:
            if self.status != "planned" or self.planned is None:
                raise HTTPException(409, f"no plan to approve (status: {self.status})")
            self.status = "executing"
            planned, target = self.planned, self.target
        try:
            t0 = time.perf_counter()
            final_tip, error = pl.execute(self.robot, planned, self.scene,
                                          self.config, self.segmenter)
            t_exec = (time.perf_counter() - t0) * 1e3
            with self.lock:
                self._counter += 1
                trial_id = f"trial-{self._counter}"
                threshold = (self.config.success_threshold_um
                             if self.config.success_threshold_um is not None
                             else pl.voxel_diagonal_um(self.scene.spacing_um))
                record = pl.TrialRecord(
                    trial_id=trial_id, scene=self.scene.name, target_um=target,
                    error_um=error, final_tip_um=final_tip, t_acquire_ms=0.0,
                    t_estimate_ms=self._timings["estimate_ms"],
                    t_plan_ms=self._timings["plan_ms"], t_execute_ms=t_exec,
                    segmenter=self.config.segmenter,
                    sigma_move_um=self.config.sigma_move_um,
                    success=error <= threshold, failure_stage=None,
                    pose=self.estimate.pose if self.estimate else None,
                    plan=planned.plan)
                self.trials[trial_id] = record
                if self.log_path is not None:
                    pl.append_trial_log(record, self.log_path)
                # re-acquire so the views show the moved needle; pose is stale now
                self.volume = ph.reacquire(self.scene, self.robot)
                self.estimate = None
                self.planned = None
                self.status = "done"
                return record
        except pl.StageError as exc:
            with self.lock:
                self.status = "failed"
            raise HTTPException(422, f"execution failed at stage {exc.stage!r}") from exc


def create_app(scene: ph.PhantomScene, config: pl.PipelineConfig | None = None,
               log_path=None) -> FastAPI:
    config = config or pl.PipelineConfig()
    session = Session(scene, config, log_path=log_path)
    app = FastAPI(title="octnav", version="0.1.0")
    app.state.session = session

    @app.get("/volume/meta")
    def volume_meta():
        v = session.volume
        return {
            "dims": list(v.dims),
            "spacing_um": list(v.spacing_um),
            "extent_um": list(v.extent_um),
            "scene": session.scene.name,
        }

    @app.get("/projection")
    def projection_png(op: str = "mean"):
        proj = axial_projection(session.volume, op)
        return Response(content=to_png_bytes(proj.pixels), media_type="image/png")

    @app.get("/slice")
    def slice_png(theta_z: float, tx: float, ty: float):
        try:
            plane = tool_aligned_plane(theta_z, tx, ty,
                                       lateral_extent_um=session.volume.extent_um)
            bscan = virtual_bscan(session.volume, plane)
        except (ValueError, SlicePlaneError) as exc:
            raise HTTPException(400, str(exc)) from exc
        return Response(content=to_png_bytes(bscan.image), media_type="image/png")

    @app.get("/pose")
    def pose():
        try:
            est = session.ensure_estimate()
        except pl.StageError as exc:
            return {"status": "failed", "stage": exc.stage, "pose": None}
        return {"status": session.status, "pose": json.loads(est.pose.to_json())}

    @app.post("/target")
    def set_target(req: TargetRequest):
        target = np.array([req.x, req.y, req.z])
        try:
            planned = session.set_target(target)
        except pl.StageError as exc:
            raise HTTPException(422, f"planning failed at stage {exc.stage!r}: "
                                     f"{exc.cause}") from exc
        return {"status": session.status, "plan": json.loads(planned.plan.to_json())}

    @app.post("/approve")
    def approve():
        record = session.approve()
        return json.loads(record.to_json())

    @app.get("/trial/{trial_id}")
    def trial(trial_id: str):
        rec = session.trials.get(trial_id)
        if rec is None:
            raise HTTPException(404, f"unknown trial {trial_id!r}")
        return json.loads(rec.to_json())

    return app

"""Figure rendering for CLI reports.

Every CLI command that writes delimited output can also drop matplotlib
figures next to it: the projection with the fitted needle line, the
tool-aligned slice with masks and boundaries, the plan overlay, and the
trial error distribution.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def save_estimate_figures(est, out_dir) -> list[Path]:
    """Projection + fitted line, and the tool-aligned slice with the pose."""
    out_dir = Path(out_dir)
    paths = []

    proj = est.projection
    sx, sy = proj.spacing_xy_um
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.imshow(proj.pixels, cmap="gray", aspect="auto",
              extent=[0, proj.pixels.shape[1] * sx, proj.pixels.shape[0] * sy, 0])
    line = est.inplane.line
    ends = line.endpoints
    ax.plot(ends[:, 0], ends[:, 1], "r-", lw=1.5, label="fitted needle line")
    tip = est.inplane.tip_lateral_um
    ax.plot([tip[0]], [tip[1]], "c+", ms=12, mew=2, label="tip")
    ax.set_xlabel("x (um)")
    ax.set_ylabel("y (um)")
    ax.set_title(f"axial projection ({proj.operator}), "
                 f"theta_z = {np.rad2deg(est.pose.theta_z):.1f} deg")
    ax.legend(loc="upper right", fontsize=8)
    paths.append(_save(fig, out_dir / "projection.png"))

    bs = est.bscan
    fig, ax = plt.subplots(figsize=(8, 5))
    u_ext = bs.frame.width * bs.frame.su_um
    z_ext = bs.frame.height * bs.frame.sz_um
    ax.imshow(bs.image, cmap="gray", aspect="auto", extent=[0, u_ext, z_ext, 0])
    nm = est.slice_masks["needle"].scores
    if nm.max() > 0:
        ax.contour(np.linspace(0, u_ext, nm.shape[1]), np.linspace(0, z_ext, nm.shape[0]),
                   nm, levels=[0.5], colors="y", linewidths=1.0)
    ax.set_xlabel("u along needle (um)")
    ax.set_ylabel("depth (um)")
    ax.set_title(f"tool-aligned virtual B-scan, theta_y = "
                 f"{np.rad2deg(est.pose.theta_y):.1f} deg, "
                 f"t_z = {est.pose.tip_um[2]:.0f} um")
    paths.append(_save(fig, out_dir / "virtual_bscan.png"))
    return paths


def save_plan_figure(plan_result, out_dir) -> Path:
    """Target slice with the insertion line, J, and the t_A / t_B segments."""
    out_dir = Path(out_dir)
    bs = plan_result.target_bscan
    p = plan_result.plan
    frame = bs.frame

    fig, ax = plt.subplots(figsize=(8, 5))
    u_ext = frame.width * frame.su_um
    z_ext = frame.height * frame.sz_um
    ax.imshow(bs.image, cmap="gray", aspect="auto", extent=[0, u_ext, z_ext, 0])

    def to_slice(pts3):
        pts3 = np.atleast_2d(pts3)
        u = np.array([frame.lateral_to_column(q[:2]) * frame.su_um for q in pts3])
        return u, pts3[:, 2]

    for seg, color, label in [
        (np.stack([p.tip_um, p.j_um]), "tab:orange", f"t_A ({np.linalg.norm(p.t_a_um):.0f} um)"),
        (np.stack([p.j_um, p.target_um]), "tab:red", f"t_B ({np.linalg.norm(p.t_b_um):.0f} um)"),
    ]:
        u, zz = to_slice(seg)
        ax.plot(u, zz, "-o", color=color, ms=4, lw=1.6, label=label)
    u, zz = to_slice(p.target_um)
    ax.plot(u, zz, "g*", ms=14, label="target V")
    bnd = plan_result.boundaries
    cols_um = np.arange(frame.width) * frame.su_um
    for depth, color, name in [(bnd.ilm_z, "tab:cyan", "ILM"), (bnd.rpe_z, "tab:blue", "RPE")]:
        ax.plot(cols_um, depth * frame.sz_um, ".", color=color, ms=1, label=name)
    ax.set_xlabel("u along needle (um)")
    ax.set_ylabel("depth (um)")
    ax.set_title("insertion plan on the target-plane virtual B-scan")
    ax.legend(loc="upper right", fontsize=8)
    return _save(fig, out_dir / "plan.png")


def save_trials_figure(records, out_dir) -> Path:
    """Tip-to-target error per trial, grouped by segmenter."""
    out_dir = Path(out_dir)
    fig, ax = plt.subplots(figsize=(7, 4))
    errors = [r.error_um for r in records]
    labels = [r.trial_id for r in records]
    ax.bar(range(len(errors)), errors, color="tab:blue")
    mean = float(np.mean(errors)) if errors else 0.0
    ax.axhline(mean, color="tab:red", ls="--", lw=1,
               label=f"mean {mean:.1f} um")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("tip-to-target error (um)")
    ax.set_title("closed-loop trial errors")
    ax.legend(fontsize=8)
    return _save(fig, out_dir / "trial_errors.png")


def save_benchmark_figure(report, out_dir) -> Path:
    out_dir = Path(out_dir)
    fig, ax = plt.subplots(figsize=(5, 4))
    stages = ["estimate", "plan"]
    means = [report.estimate_ms[0], report.plan_ms[0]]
    sds = [report.estimate_ms[1], report.plan_ms[1]]
    ax.bar(stages, means, yerr=sds, capsize=6, color=["tab:blue", "tab:orange"])
    ax.set_ylabel("wall clock (ms)")
    ax.set_title(f"stage timings, n = {report.repetitions}")
    return _save(fig, out_dir / "benchmark.png")

/** Plan overlay: draw primitives for the slice view.
 *
 * Every endpoint comes verbatim from the server's plan payload (tip, J,
 * target, and the tA/tB vectors); this module only changes the display
 * basis: micrometre points are projected onto the slice's horizontal axis
 * (derived from the served yaw) and the depth axis, then scaled by the
 * served voxel spacing.  No planning numbers are computed here.
 */

import type { PlanJson, PoseJson } from "./api.js";

export interface SlicePointPx {
  u: number;
  z: number;
}

export interface OverlaySegment {
  kind: "t_A" | "t_B" | "insertion_line" | "needle_axis";
  from: SlicePointPx;
  to: SlicePointPx;
  lengthUm: number;
}

export interface OverlayMarker {
  kind: "J" | "target" | "tip";
  at: SlicePointPx;
}

export interface PlanOverlay {
  segments: OverlaySegment[];
  markers: OverlayMarker[];
}

function norm(v: [number, number, number]): number {
  return Math.hypot(v[0], v[1], v[2]);
}

function add(a: [number, number, number], b: [number, number, number]):
    [number, number, number] {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

/** Projector from volume micrometres into (u, z) slice pixels.
 *
 * The slice's horizontal axis is the advance direction implied by the served
 * yaw, (cos theta_z, -sin theta_z); u is measured from the plan's tip point.
 */
export function slicePixelProjector(
  pose: PoseJson,
  originUm: [number, number, number],
  spacingUm: [number, number, number],
  suUm?: number,
) {
  const ux = Math.cos(pose.theta_z_rad);
  const uy = -Math.sin(pose.theta_z_rad);
  const su = suUm ?? spacingUm[0];
  const sz = spacingUm[2];
  return (p: [number, number, number]): SlicePointPx => ({
    u: ((p[0] - originUm[0]) * ux + (p[1] - originUm[1]) * uy) / su,
    z: p[2] / sz,
  });
}

export function planOverlay(
  plan: PlanJson,
  pose: PoseJson,
  spacingUm: [number, number, number],
  suUm?: number,
): PlanOverlay {
  const tip = pose.tip_um;
  const project = slicePixelProjector(pose, tip, spacingUm, suUm);
  const j = plan.J_um;
  const target = plan.target_um;

  const segments: OverlaySegment[] = [];
  const lenA = norm(plan.tA_um);
  if (lenA > 0) {
    segments.push({ kind: "t_A", from: project(tip), to: project(j), lengthUm: lenA });
  }
  segments.push({
    kind: "t_B",
    from: project(j),
    to: project(target),
    lengthUm: norm(plan.tB_um),
  });
  // insertion line: through the target along tB (server vectors, extended for context)
  const lenB = norm(plan.tB_um);
  if (lenB > 0) {
    const beyond = add(target, [
      plan.tB_um[0] * 0.25,
      plan.tB_um[1] * 0.25,
      plan.tB_um[2] * 0.25,
    ]);
    segments.push({
      kind: "insertion_line",
      from: project(j),
      to: project(beyond),
      lengthUm: lenB * 1.25,
    });
  }

  return {
    segments,
    markers: [
      { kind: "tip", at: project(tip) },
      { kind: "J", at: project(j) },
      { kind: "target", at: project(target) },
    ],
  };
}

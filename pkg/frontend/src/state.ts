/** Session view state: what the operator sees and what actions are legal.
 *
 * Approve is enabled only while a plan preview is on screen (`planned`), and
 * a target can only be picked once a pose is available.  Approval is a
 * distinct user action; nothing executes automatically.
 */

import type {
  LateralPickUm,
} from "./picking.js";
import type {
  PlanJson,
  PoseJson,
  PoseResponse,
  PlanResponse,
  SessionStatus,
  TargetUm,
  TrialJson,
} from "./api.js";

export interface ViewState {
  status: SessionStatus;
  pose: PoseJson | null;
  pendingLateral: LateralPickUm | null;
  target: TargetUm | null;
  plan: PlanJson | null;
  lastTrial: TrialJson | null;
  message: string;
}

export const initialState: ViewState = {
  status: "idle",
  pose: null,
  pendingLateral: null,
  target: null,
  plan: null,
  lastTrial: null,
  message: "acquiring pose…",
};

export function canPickTarget(s: ViewState): boolean {
  return s.pose !== null && s.status !== "executing";
}

export function canApprove(s: ViewState): boolean {
  return s.status === "planned" && s.plan !== null;
}

export function poseLoaded(s: ViewState, resp: PoseResponse): ViewState {
  return {
    ...s,
    status: resp.status,
    pose: resp.pose,
    message: resp.pose ? "pose ready: pick a target" : `pose failed (${resp.stage})`,
  };
}

export function lateralPicked(s: ViewState, pick: LateralPickUm): ViewState {
  if (!canPickTarget(s)) return s;
  return { ...s, pendingLateral: pick, message: "now pick the depth on the slice" };
}

export function planReceived(s: ViewState, resp: PlanResponse, target: TargetUm): ViewState {
  return {
    ...s,
    status: resp.status,
    target,
    plan: resp.plan,
    pendingLateral: null,
    message: "plan preview ready: approve to execute",
  };
}

export function approveStarted(s: ViewState): ViewState {
  if (!canApprove(s)) return s;
  return { ...s, status: "executing", message: "executing…" };
}

export function trialCompleted(s: ViewState, trial: TrialJson): ViewState {
  return {
    ...s,
    status: "done",
    lastTrial: trial,
    plan: null,
    target: null,
    message: `done: error ${formatErrorBadge(trial)}`,
  };
}

export function sessionFailed(s: ViewState, detail: string): ViewState {
  return { ...s, status: "failed", message: `failed: ${detail}` };
}

/** The error badge shows the server-reported error verbatim. */
export function formatErrorBadge(trial: TrialJson): string {
  return `${trial.error_um} um`;
}

/** Typed client for the navigation server's JSON API.
 *
 * All geometry is in micrometres in the volume frame; angles are radians.
 * The console never computes planning geometry itself: every number it
 * displays comes from these payloads (unit conversion for display aside).
 */

export type SessionStatus = "idle" | "planned" | "executing" | "done" | "failed";

export interface VolumeMeta {
  dims: [number, number, number];
  spacing_um: [number, number, number];
  extent_um: [number, number, number];
  scene: string;
}

export interface PoseJson {
  theta_z_rad: number;
  theta_y_rad: number;
  tip_um: [number, number, number];
  R: number[];
}

export interface PoseResponse {
  status: SessionStatus;
  pose: PoseJson | null;
  stage?: string;
}

export interface PlanJson {
  target_um: [number, number, number];
  J_um: [number, number, number];
  tA_um: [number, number, number];
  tB_um: [number, number, number];
  tB_corrected_um: [number, number, number];
  robot_cmds_um: { A: [number, number, number]; B: [number, number, number] };
}

export interface PlanResponse {
  status: SessionStatus;
  plan: PlanJson;
}

export interface TrialJson {
  trial_id: string;
  scene: string;
  target_um: [number, number, number];
  error_um: number;
  final_tip_um: [number, number, number];
  success: boolean;
  segmenter: string;
  sigma_move_um: number;
}

export interface TargetUm {
  x: number;
  y: number;
  z: number;
}

/** Abstract transport so tests can drive the console from a scripted session. */
export interface NavApi {
  volumeMeta(): Promise<VolumeMeta>;
  pose(): Promise<PoseResponse>;
  postTarget(target: TargetUm): Promise<PlanResponse>;
  approve(): Promise<TrialJson>;
  trial(id: string): Promise<TrialJson>;
  projectionUrl(): string;
  sliceUrl(thetaZRad: number, txUm: number, tyUm: number): string;
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      /* keep statusText */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class HttpApi implements NavApi {
  constructor(readonly base: string = "") {}

  volumeMeta(): Promise<VolumeMeta> {
    return fetch(`${this.base}/volume/meta`).then((r) => asJson<VolumeMeta>(r));
  }

  pose(): Promise<PoseResponse> {
    return fetch(`${this.base}/pose`).then((r) => asJson<PoseResponse>(r));
  }

  postTarget(target: TargetUm): Promise<PlanResponse> {
    return fetch(`${this.base}/target`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(target),
    }).then((r) => asJson<PlanResponse>(r));
  }

  approve(): Promise<TrialJson> {
    return fetch(`${this.base}/approve`, { method: "POST" }).then((r) =>
      asJson<TrialJson>(r),
    );
  }

  trial(id: string): Promise<TrialJson> {
    return fetch(`${this.base}/trial/${id}`).then((r) => asJson<TrialJson>(r));
  }

  projectionUrl(): string {
    return `${this.base}/projection`;
  }

  sliceUrl(thetaZRad: number, txUm: number, tyUm: number): string {
    const q = new URLSearchParams({
      theta_z: String(thetaZRad),
      tx: String(txUm),
      ty: String(tyUm),
    });
    return `${this.base}/slice?${q}`;
  }
}

/** DOM wiring: projection + slice panes, two-click target picking, plan
 * preview with overlay, an explicit approve button, and the result badge. */

import { HttpApi, type NavApi, type VolumeMeta, ApiError } from "./api.js";
import {
  composeTarget,
  projectionClickInBounds,
  projectionClickToLateral,
  sliceClickInBounds,
  sliceClickToDepth,
} from "./picking.js";
import { planOverlay } from "./overlay.js";
import {
  ViewState,
  approveStarted,
  canApprove,
  canPickTarget,
  initialState,
  lateralPicked,
  planReceived,
  poseLoaded,
  sessionFailed,
  trialCompleted,
} from "./state.js";

class Console {
  private state: ViewState = initialState;
  private meta: VolumeMeta | null = null;

  constructor(
    private readonly api: NavApi,
    private readonly els: {
      projection: HTMLImageElement;
      slice: HTMLImageElement;
      overlay: HTMLCanvasElement;
      status: HTMLElement;
      approve: HTMLButtonElement;
      plan: HTMLElement;
    },
  ) {}

  async start(): Promise<void> {
    this.meta = await this.api.volumeMeta();
    this.els.projection.src = this.api.projectionUrl();
    this.setState(poseLoaded(this.state, await this.api.pose()));
    this.refreshSlice();

    this.els.projection.addEventListener("click", (ev) => this.onProjectionClick(ev));
    this.els.slice.addEventListener("click", (ev) => this.onSliceClick(ev));
    this.els.approve.addEventListener("click", () => void this.onApprove());
  }

  private setState(next: ViewState): void {
    this.state = next;
    this.els.status.textContent = `${next.status}: ${next.message}`;
    this.els.approve.disabled = !canApprove(next);
    this.els.plan.textContent = next.plan
      ? JSON.stringify(next.plan, null, 2)
      : next.lastTrial
        ? `error_um: ${next.lastTrial.error_um}`
        : "";
    this.drawOverlay();
  }

  private refreshSlice(): void {
    const pose = this.state.pose;
    if (!pose) return;
    // slice through the candidate target when one is pending, else the tool plane
    const lat = this.state.pendingLateral;
    this.els.slice.src = lat
      ? this.api.sliceUrl(pose.theta_z_rad, lat.xUm, lat.yUm)
      : this.api.sliceUrl(pose.theta_z_rad, pose.tip_um[0], pose.tip_um[1]);
  }

  private pixelFromClick(img: HTMLImageElement, ev: MouseEvent): [number, number] {
    const rect = img.getBoundingClientRect();
    const px = ((ev.clientX - rect.left) / rect.width) * img.naturalWidth;
    const py = ((ev.clientY - rect.top) / rect.height) * img.naturalHeight;
    return [Math.floor(px), Math.floor(py)];
  }

  private onProjectionClick(ev: MouseEvent): void {
    if (!this.meta || !canPickTarget(this.state)) return;
    const [px, py] = this.pixelFromClick(this.els.projection, ev);
    if (!projectionClickInBounds(px, py, this.meta)) return;
    const pick = projectionClickToLateral(px, py, this.meta.spacing_um);
    this.setState(lateralPicked(this.state, pick));
    this.refreshSlice();
  }

  private async onSliceClick(ev: MouseEvent): Promise<void> {
    if (!this.meta || !this.state.pendingLateral) return;
    const [, pz] = this.pixelFromClick(this.els.slice, ev);
    if (!sliceClickInBounds(pz, this.meta)) return;
    const target = composeTarget(
      this.state.pendingLateral,
      sliceClickToDepth(pz, this.meta.spacing_um),
    );
    try {
      const resp = await this.api.postTarget(target);
      this.setState(planReceived(this.state, resp, target));
    } catch (err) {
      this.setState(sessionFailed(this.state, describe(err)));
    }
  }

  private async onApprove(): Promise<void> {
    if (!canApprove(this.state)) return;
    this.setState(approveStarted(this.state));
    try {
      const trial = await this.api.approve();
      this.setState(trialCompleted(this.state, trial));
      this.els.projection.src = `${this.api.projectionUrl()}?t=${Date.now()}`;
      this.refreshSlice();
    } catch (err) {
      this.setState(sessionFailed(this.state, describe(err)));
    }
  }

  private drawOverlay(): void {
    const ctx = this.els.overlay.getContext("2d");
    if (!ctx || !this.meta) return;
    ctx.clearRect(0, 0, this.els.overlay.width, this.els.overlay.height);
    const { plan, pose } = this.state;
    if (!plan || !pose) return;
    const ov = planOverlay(plan, pose, this.meta.spacing_um);
    const colors: Record<string, string> = {
      t_A: "#ff9800",
      t_B: "#f44336",
      insertion_line: "#90caf9",
      needle_axis: "#ffee58",
    };
    for (const seg of ov.segments) {
      ctx.strokeStyle = colors[seg.kind] ?? "#fff";
      ctx.beginPath();
      ctx.moveTo(seg.from.u, seg.from.z);
      ctx.lineTo(seg.to.u, seg.to.z);
      ctx.stroke();
      ctx.fillStyle = ctx.strokeStyle;
      ctx.fillText(`${seg.kind} ${seg.lengthUm.toFixed(0)} um`, seg.to.u + 4, seg.to.z);
    }
    for (const m of ov.markers) {
      ctx.fillStyle = m.kind === "target" ? "#4caf50" : "#fff";
      ctx.fillRect(m.at.u - 2, m.at.z - 2, 4, 4);
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.status}: ${err.message}`;
  return String(err);
}

export function mount(base = ""): void {
  const byId = <T extends HTMLElement>(id: string) =>
    document.getElementById(id) as T;
  const consoleApp = new Console(new HttpApi(base), {
    projection: byId<HTMLImageElement>("projection"),
    slice: byId<HTMLImageElement>("slice"),
    overlay: byId<HTMLCanvasElement>("overlay"),
    status: byId<HTMLElement>("status"),
    approve: byId<HTMLButtonElement>("approve"),
    plan: byId<HTMLElement>("plan"),
  });
  void consoleApp.start();
}

if (typeof document !== "undefined" && document.getElementById("projection")) {
  mount();
}

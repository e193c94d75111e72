/** Two-click 3D target picking.
 *
 * The lateral coordinates come from a click on the axial projection, the
 * depth from a click on the target-plane virtual B-scan.  Conversions use
 * the server-reported voxel spacing and nothing else.
 */

import type { TargetUm, VolumeMeta } from "./api.js";

export interface LateralPickUm {
  xUm: number;
  yUm: number;
}

export function projectionClickToLateral(
  pixelX: number,
  pixelY: number,
  spacingUm: [number, number, number],
): LateralPickUm {
  return { xUm: pixelX * spacingUm[0], yUm: pixelY * spacingUm[1] };
}

export function sliceClickToDepth(
  pixelZ: number,
  spacingUm: [number, number, number],
): number {
  return pixelZ * spacingUm[2];
}

export function composeTarget(lateral: LateralPickUm, depthUm: number): TargetUm {
  return { x: lateral.xUm, y: lateral.yUm, z: depthUm };
}

/** Clicks outside the rendered image must not produce a request. */
export function projectionClickInBounds(
  pixelX: number,
  pixelY: number,
  meta: VolumeMeta,
): boolean {
  return (
    pixelX >= 0 && pixelX < meta.dims[0] && pixelY >= 0 && pixelY < meta.dims[1]
  );
}

export function sliceClickInBounds(pixelZ: number, meta: VolumeMeta): boolean {
  return pixelZ >= 0 && pixelZ < meta.dims[2];
}

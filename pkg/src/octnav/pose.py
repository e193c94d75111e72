"""Robust line fitting and 5-DoF needle pose estimation.

The in-plane yaw theta_z and the lateral tip position come from the axial
projection image; the pitch theta_y and the tip depth come from the
tool-aligned virtual B-scan.  Angle conventions:

* theta_z in (-pi/2, pi/2]: the needle-advance direction in the lateral plane
  is u = (cos(theta_z), -sin(theta_z)), so the tool-aligned plane normal
  (sin(theta_z), cos(theta_z), 0) is perpendicular to the needle.
* theta_y in (-pi/2, pi/2): pitch of the needle against the slice horizontal
  axis; positive values descend toward the retina (+Z).

The full 3D advance direction is d = cos(theta_y) * (u, 0) + sin(theta_y) * k.
Roll is unused (needle symmetry).  The serialized rotation matrix is the
yaw-pitch product R = Rz(theta_z) @ Ry(theta_y).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from octnav.segmentation import SoftMask, confidence_filter

DEFAULT_HUBER_DELTA = 1.345
_IRLS_TOL = 1e-8
_IRLS_MAX_ITER = 100


class FitError(ValueError):
    """Raised when a line fit is degenerate or has too few points."""


@dataclass(frozen=True)
class Line2D:
    """2D line with unit direction, the inliers that support it, and the
    inlier-covered segment endpoints (both on the line)."""

    direction: np.ndarray      # (2,) unit
    point: np.ndarray          # (2,) on the line
    inliers: np.ndarray        # (M, 2) inlier points (original coordinates)
    endpoints: np.ndarray      # (2, 2) segment covered by inliers

    def project(self, points) -> np.ndarray:
        """Signed coordinate of points along the line, measured from ``point``."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return (p - self.point) @ self.direction


def _huber_weights(residuals: np.ndarray, delta: float, scale: float) -> np.ndarray:
    if scale <= 0:
        return np.ones_like(residuals)
    a = np.abs(residuals) / scale
    w = np.ones_like(a)
    heavy = a > delta
    w[heavy] = delta / a[heavy]
    return w


def fit_line_huber(points, weights=None, delta: float = DEFAULT_HUBER_DELTA) -> Line2D:
    """Fit a 2D line by iteratively reweighted least squares under Huber loss.

    The fit is performed in the frame rotated so the dominant spread axis is
    the regressor, which keeps near-vertical lines well conditioned.
    Convergence: parameter change < 1e-8 or 100 iterations.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if delta <= 0:
        raise ValueError("huber delta must be positive")
    if len(pts) < 2 or len(np.unique(pts, axis=0)) < 2:
        raise FitError(f"need at least 2 distinct points, got {len(pts)}")
    w_in = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=np.float64)
    if np.any(w_in < 0) or w_in.sum() <= 0:
        raise FitError("point weights must be non-negative with positive sum")

    # principal axis of the weighted point cloud -> regressor axis
    mean = (w_in[:, None] * pts).sum(axis=0) / w_in.sum()
    centered = pts - mean
    cov = (w_in[:, None] * centered).T @ centered / w_in.sum()
    evals, evecs = np.linalg.eigh(cov)
    if evals[-1] <= 0:
        raise FitError("zero spread: all points coincide")
    axis = evecs[:, -1]
    perp = np.array([-axis[1], axis[0]])

    s = centered @ axis       # regressor
    r = centered @ perp       # response (perpendicular-ish residual axis)

    slope, icept = None, None
    w_h = np.ones(len(pts))
    for _ in range(_IRLS_MAX_ITER):
        w = w_in * w_h
        sw = w.sum()
        sm = (w * s).sum() / sw
        rm = (w * r).sum() / sw
        var = (w * (s - sm) ** 2).sum()
        if var <= 0:
            raise FitError("zero spread along the regressor axis")
        new_slope = (w * (s - sm) * (r - rm)).sum() / var
        new_icept = rm - new_slope * sm
        res = r - (new_slope * s + new_icept)
        mad = np.median(np.abs(res - np.median(res)))
        scale = 1.4826 * mad
        w_h = _huber_weights(res, delta, scale)
        converged = (slope is not None
                     and max(abs(new_slope - slope), abs(new_icept - icept)) < _IRLS_TOL)
        slope, icept = new_slope, new_icept
        if converged:
            break

    res = r - (slope * s + icept)
    mad = np.median(np.abs(res - np.median(res)))
    scale = 1.4826 * mad
    cutoff = max(delta * scale, 1e-9 * max(1.0, np.abs(res).max()))
    inlier_mask = np.abs(res) <= cutoff

    direction = axis + slope * perp
    direction = direction / np.linalg.norm(direction)
    anchor = mean + icept * perp

    inliers = pts[inlier_mask]
    t = (inliers - anchor) @ direction
    endpoints = np.stack([anchor + t.min() * direction, anchor + t.max() * direction])
    return Line2D(direction=direction, point=anchor, inliers=inliers, endpoints=endpoints)


_BORDER_AXES = {"-x": (0, +1.0), "+x": (0, -1.0), "-y": (1, +1.0), "+y": (1, -1.0)}


def _require_line_like(pts: np.ndarray, weights: np.ndarray, min_ratio: float) -> None:
    w = weights / weights.sum()
    mean = (w[:, None] * pts).sum(axis=0)
    centered = pts - mean
    cov = (w[:, None] * centered).T @ centered
    evals = np.linalg.eigvalsh(cov)
    if evals[-1] <= 0 or evals[-1] < min_ratio * max(evals[0], 1e-12):
        raise FitError("selected pixels form an isotropic blob, not a line")


@dataclass(frozen=True)
class InPlaneEstimate:
    theta_z: float
    tip_lateral_um: np.ndarray     # (2,) um
    line: Line2D


def estimate_inplane(mask: SoftMask, fraction: float, spacing_xy_um,
                     entry_border: str = "-x", delta: float = DEFAULT_HUBER_DELTA,
                     min_anisotropy: float = 5.0) -> InPlaneEstimate:
    """Estimate (theta_z, t_x, t_y) from the projection needle mask.

    Pixels are converted to micrometres before fitting so the angle is correct
    under anisotropic spacing.  The tip is the projection onto the fitted line
    of the inlier extremum along the needle-advance direction, which points
    away from ``entry_border``.  Isotropic pixel blobs (no line-like structure)
    are rejected.
    """
    if entry_border not in _BORDER_AXES:
        raise ValueError(f"unknown entry border {entry_border!r}")
    selected = confidence_filter(mask, fraction)
    scores = mask.scores[selected[:, 0], selected[:, 1]]
    keep = scores > 0
    if not np.any(keep):
        raise FitError("no needle pixels above zero confidence")
    rows = selected[keep, 0].astype(np.float64)
    cols = selected[keep, 1].astype(np.float64)
    sx, sy = spacing_xy_um
    pts = np.stack([cols * sx, rows * sy], axis=1)
    _require_line_like(pts, scores[keep], min_anisotropy)
    line = fit_line_huber(pts, weights=scores[keep], delta=delta)

    axis_i, wanted_sign = _BORDER_AXES[entry_border]
    comp = line.direction[axis_i]
    if abs(comp) < 1e-9:
        raise FitError(
            f"fitted line is perpendicular to the advance axis for border {entry_border}"
        )
    direction = line.direction * (wanted_sign * np.sign(comp))
    theta_z = float(np.arctan2(-direction[1], direction[0]))

    t = (line.inliers - line.point) @ direction
    tip = line.point + t.max() * direction
    return InPlaneEstimate(theta_z=theta_z, tip_lateral_um=tip, line=line)


@dataclass(frozen=True)
class AxialEstimate:
    theta_y: float
    tip_z_um: float
    line: Line2D


def estimate_axial(needle_mask: SoftMask, fraction: float, su_um: float, sz_um: float,
                   delta: float = DEFAULT_HUBER_DELTA) -> AxialEstimate:
    """Estimate (theta_y, t_z) from the tool-aligned slice needle mask.

    theta_y is the angle of the fitted line against the slice horizontal axis
    (columns already run along the needle-advance direction); t_z is the depth
    of the innermost inlier projected onto the line.
    """
    selected = confidence_filter(needle_mask, fraction)
    scores = needle_mask.scores[selected[:, 0], selected[:, 1]]
    keep = scores > 0
    if not np.any(keep):
        raise FitError("no needle pixels above zero confidence in the slice")
    rows = selected[keep, 0].astype(np.float64)   # z
    cols = selected[keep, 1].astype(np.float64)   # u
    pts = np.stack([cols * su_um, rows * sz_um], axis=1)
    line = fit_line_huber(pts, weights=scores[keep], delta=delta)

    direction = line.direction if line.direction[0] >= 0 else -line.direction
    if abs(direction[0]) < 1e-9:
        raise FitError("slice needle line is vertical; cannot orient along advance")
    theta_y = float(np.arctan2(direction[1], direction[0]))

    t = (line.inliers - line.point) @ direction
    # innermost point: the inlier whose on-line projection is deepest
    proj = line.point[None, :] + t[:, None] * direction[None, :]
    tip_z = float(proj[:, 1].max() if direction[1] >= 0 else proj[:, 1].min())
    return AxialEstimate(theta_y=theta_y, tip_z_um=tip_z, line=line)


def advance_direction_2d(theta_z: float) -> np.ndarray:
    """Lateral needle-advance direction for a given yaw."""
    return np.array([np.cos(theta_z), -np.sin(theta_z)])


def direction_from_angles(theta_z: float, theta_y: float) -> np.ndarray:
    """Unit 3D needle-advance direction for yaw theta_z and pitch theta_y."""
    u = advance_direction_2d(theta_z)
    return np.array([np.cos(theta_y) * u[0], np.cos(theta_y) * u[1], np.sin(theta_y)])


def rotation_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_y(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass(frozen=True)
class NeedlePose:
    """5-DoF needle pose: yaw, pitch, and the metric tip position."""

    theta_z: float
    theta_y: float
    tip_um: np.ndarray

    def __post_init__(self):
        tip = np.asarray(self.tip_um, dtype=np.float64).reshape(3)
        if not (np.isfinite(self.theta_z) and np.isfinite(self.theta_y)
                and np.all(np.isfinite(tip))):
            raise ValueError("pose angles and tip must be finite")
        object.__setattr__(self, "tip_um", tip)

    @property
    def rotation(self) -> np.ndarray:
        """Yaw-pitch rotation matrix Rz(theta_z) @ Ry(theta_y) (roll fixed to zero)."""
        return rotation_z(self.theta_z) @ rotation_y(self.theta_y)

    @property
    def direction(self) -> np.ndarray:
        """Unit advance direction of the needle axis in the volume frame."""
        return direction_from_angles(self.theta_z, self.theta_y)

    def to_json(self) -> str:
        return json.dumps({
            "theta_z_rad": self.theta_z,
            "theta_y_rad": self.theta_y,
            "tip_um": self.tip_um.tolist(),
            "R": self.rotation.reshape(-1).tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "NeedlePose":
        obj = json.loads(text)
        return cls(theta_z=float(obj["theta_z_rad"]), theta_y=float(obj["theta_y_rad"]),
                   tip_um=np.asarray(obj["tip_um"], dtype=np.float64))


def compose_pose(theta_z: float, theta_y: float, tip_um) -> NeedlePose:
    """Assemble the 5-DoF pose from the two estimated angles and the tip."""
    return NeedlePose(theta_z=float(theta_z), theta_y=float(theta_y),
                      tip_um=np.asarray(tip_um, dtype=np.float64))

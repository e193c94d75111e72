"""Virtual B-scan composition: arbitrary vertical-plane slices of a volume.

A slice plane is given as (P0, n).  Only vertical planes (n_z = 0) are
supported: every output column is then a single lateral position sampled for
the full axial depth, and the column intensities are the bilinear
interpolation, in the lateral plane only, of the A-scans adjacent to the
sample point.  The axial axis is copied, never resampled.

The in-plane horizontal axis is u = n x k_hat; for a tool-aligned plane with
normal (sin(theta_z), cos(theta_z), 0) this makes u = (cos(theta_z),
-sin(theta_z), 0), i.e. the slice columns run along the needle-advance
direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from octnav.volume import IoctVolume

_UNIT_TOL = 1e-9


class SlicePlaneError(ValueError):
    """Raised for unsupported or volume-missing slice planes."""


@dataclass(frozen=True)
class PlaneSpec:
    """Plane (point, unit normal) in metric volume coordinates."""

    point_um: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.point_um, dtype=np.float64)
        n = np.asarray(self.normal, dtype=np.float64)
        if p.shape != (3,) or n.shape != (3,):
            raise ValueError("plane point and normal must be 3-vectors")
        if abs(np.linalg.norm(n) - 1.0) > _UNIT_TOL:
            raise ValueError(f"plane normal must be unit length, |n| = {np.linalg.norm(n)}")
        object.__setattr__(self, "point_um", p)
        object.__setattr__(self, "normal", n)

    @property
    def is_vertical(self) -> bool:
        return abs(self.normal[2]) <= _UNIT_TOL


def tool_aligned_plane(theta_z: float, tip_x_um: float, tip_y_um: float,
                       lateral_extent_um=None) -> PlaneSpec:
    """Plane through the in-plane tip with normal (sin(theta_z), cos(theta_z), 0).

    The plane contains the line fitted in the projection image and is parallel
    to the volume Z axis.  If ``lateral_extent_um`` is given, the tip must lie
    inside it.
    """
    if not np.isfinite(theta_z):
        raise ValueError("theta_z must be finite")
    if lateral_extent_um is not None:
        ex, ey = lateral_extent_um[:2]
        if not (0.0 <= tip_x_um <= ex and 0.0 <= tip_y_um <= ey):
            raise ValueError(
                f"tip ({tip_x_um}, {tip_y_um}) um outside lateral extent ({ex}, {ey}) um"
            )
    normal = np.array([np.sin(theta_z), np.cos(theta_z), 0.0])
    return PlaneSpec(point_um=np.array([tip_x_um, tip_y_um, 0.0]), normal=normal)


@dataclass(frozen=True)
class SliceFrame:
    """Geometry of a virtual B-scan: pixel (u, z) -> metric point mapping.

    ``origin_um`` is the metric lateral position of column 0; column u lies at
    origin + u * su * u_dir, row z at depth z * sz.
    """

    plane: PlaneSpec
    origin_um: np.ndarray          # (2,) lateral, um
    u_dir: np.ndarray              # (2,) unit lateral direction of columns
    su_um: float
    sz_um: float
    width: int                     # U columns
    height: int                    # Z rows

    def column_positions(self) -> np.ndarray:
        """Lateral metric positions of all columns, shape (U, 2)."""
        t = np.arange(self.width)[:, None] * self.su_um
        return self.origin_um[None, :] + t * self.u_dir[None, :]

    def pixel_to_metric(self, u, z) -> np.ndarray:
        """Map pixel coordinates (fractional ok) to metric (x, y, z) um."""
        u = np.asarray(u, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        lat = self.origin_um + (u[..., None] * self.su_um) * self.u_dir
        return np.concatenate([lat, (z * self.sz_um)[..., None]], axis=-1)

    def lateral_to_column(self, point_lat_um) -> float:
        """Fractional column index of a lateral metric point (projected onto u)."""
        d = np.asarray(point_lat_um, dtype=np.float64) - self.origin_um
        return float(d @ self.u_dir) / self.su_um


@dataclass(frozen=True)
class VirtualBScan:
    """A sampled slice: (Z, U) float image plus its geometry and validity row."""

    image: np.ndarray
    frame: SliceFrame
    valid_columns: np.ndarray      # (U,) bool, False where samples left the volume

    @property
    def plane(self) -> PlaneSpec:
        return self.frame.plane


def _clip_line_to_rect(p0, d, ext_x, ext_y):
    """Liang-Barsky: parameter range where p0 + t*d stays in [0,ext_x]x[0,ext_y]."""
    t_lo, t_hi = -np.inf, np.inf
    for axis, ext in ((0, ext_x), (1, ext_y)):
        if abs(d[axis]) < 1e-15:
            if not (0.0 <= p0[axis] <= ext):
                return None
            continue
        ta = (0.0 - p0[axis]) / d[axis]
        tb = (ext - p0[axis]) / d[axis]
        t_lo = max(t_lo, min(ta, tb))
        t_hi = min(t_hi, max(ta, tb))
    if t_lo > t_hi:
        return None
    return t_lo, t_hi


def slice_frame(volume_dims, spacing_um, plane: PlaneSpec,
                u_extent_um=None, u_spacing_um=None) -> SliceFrame:
    """Build the slice geometry without sampling any intensities.

    The column range defaults to the full intersection of the plane's lateral
    trace with the volume's lateral rectangle.
    """
    if not plane.is_vertical:
        raise SlicePlaneError(
            f"only vertical planes are supported (n_z = 0), got n = {plane.normal}"
        )
    x, y, z = volume_dims
    sx, sy, sz = spacing_um
    su = float(u_spacing_um) if u_spacing_um is not None else float(sx)
    if su <= 0:
        raise ValueError("u_spacing_um must be positive")

    n = plane.normal
    u_dir = np.array([n[1], -n[0]])            # n x k_hat, lateral part
    u_dir = u_dir / np.linalg.norm(u_dir)
    p0 = plane.point_um[:2].astype(np.float64)

    ext_x, ext_y = (x - 1) * sx, (y - 1) * sy
    clip = _clip_line_to_rect(p0, u_dir, ext_x, ext_y)
    if clip is None:
        raise SlicePlaneError("plane does not intersect the volume")
    t_lo, t_hi = clip
    if u_extent_um is not None:
        t_lo = max(t_lo, float(u_extent_um[0]))
        t_hi = min(t_hi, float(u_extent_um[1]))
        if t_lo > t_hi:
            raise SlicePlaneError("requested u-extent misses the volume")

    width = int(np.floor((t_hi - t_lo) / su + 1e-9)) + 1
    origin = p0 + t_lo * u_dir
    return SliceFrame(plane=plane, origin_um=origin, u_dir=u_dir,
                      su_um=su, sz_um=float(sz), width=width, height=z)


def frame_only_bscan(volume_dims, spacing_um, plane: PlaneSpec,
                     u_extent_um=None, u_spacing_um=None) -> VirtualBScan:
    """A zero-intensity slice carrying only geometry and validity.

    Useful when a consumer (e.g. a ground-truth segmenter) needs the pixel
    mapping of a plane without paying for sampling.
    """
    frame = slice_frame(volume_dims, spacing_um, plane,
                        u_extent_um=u_extent_um, u_spacing_um=u_spacing_um)
    x, y, _ = volume_dims
    sx, sy, _ = spacing_um
    pos = frame.column_positions()
    valid = ((pos[:, 0] / sx >= 0) & (pos[:, 0] / sx <= x - 1)
             & (pos[:, 1] / sy >= 0) & (pos[:, 1] / sy <= y - 1))
    return VirtualBScan(image=np.zeros((frame.height, frame.width)),
                        frame=frame, valid_columns=valid)


def virtual_bscan(volume: IoctVolume, plane: PlaneSpec,
                  u_extent_um=None, u_spacing_um=None) -> VirtualBScan:
    """Compose a virtual B-scan by lateral bilinear interpolation of A-scans.

    Columns whose lateral sample point falls outside the volume are zero-filled
    and flagged invalid.  When sample points land exactly on the A-scan grid
    the interpolation weights degenerate to 1/0 and the output column equals
    the stored A-scan bit for bit.
    """
    frame = slice_frame(volume.dims, volume.spacing_um, plane,
                        u_extent_um=u_extent_um, u_spacing_um=u_spacing_um)
    x, y, _ = volume.dims
    sx, sy, _ = volume.spacing_um

    pos = frame.column_positions()                     # (U, 2) um
    fx = pos[:, 0] / sx
    fy = pos[:, 1] / sy
    valid = (fx >= 0) & (fx <= x - 1) & (fy >= 0) & (fy <= y - 1)

    fx_c = np.clip(fx, 0, x - 1)
    fy_c = np.clip(fy, 0, y - 1)
    ix0 = np.minimum(np.floor(fx_c).astype(np.intp), x - 1)
    iy0 = np.minimum(np.floor(fy_c).astype(np.intp), y - 1)
    ix1 = np.minimum(ix0 + 1, x - 1)
    iy1 = np.minimum(iy0 + 1, y - 1)
    wx = fx_c - ix0
    wy = fy_c - iy0

    data = volume.data
    cols = (
        ((1.0 - wx) * (1.0 - wy))[:, None] * data[iy0, ix0]
        + (wx * (1.0 - wy))[:, None] * data[iy0, ix1]
        + ((1.0 - wx) * wy)[:, None] * data[iy1, ix0]
        + (wx * wy)[:, None] * data[iy1, ix1]
    )
    cols[~valid] = 0.0
    return VirtualBScan(image=cols.T.copy(), frame=frame, valid_columns=valid)

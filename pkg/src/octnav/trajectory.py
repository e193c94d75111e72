"""Two-phase insertion planning with refractive-index correction.

The trajectory to a target V decomposes into a horizontal alignment t_A onto
the insertion line (the 3D line through V parallel to the needle axis) and an
advance t_B along that line:

    t_A + t_B = V - tip,   t_B parallel to the needle axis,   t_A ⊥ k_hat

J is the intersection of the tip's horizontal plane with the insertion line;
t_A = J - tip and t_B = V - J.  Because the volume's depth axis measures
optical path, the z extent of t_B is split at the media boundaries and each
optical segment is divided by its refractive index before execution; t_A is
purely lateral and needs no correction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from octnav.pose import NeedlePose
from octnav.slicing import PlaneSpec, tool_aligned_plane

_EPS = 1e-12


class PlanningError(ValueError):
    pass


@dataclass(frozen=True)
class MediaIndices:
    """Refractive indices of the media crossed by an A-scan."""

    n_air: float = 1.0
    n_vitreous: float = 1.38
    n_tissue: float = 1.38

    def __post_init__(self):
        if min(self.n_air, self.n_vitreous, self.n_tissue) < 1.0:
            raise ValueError("refractive indices must be >= 1")


@dataclass(frozen=True)
class MediaRegion:
    label: str
    n: float
    z_start_um: float


@dataclass(frozen=True)
class MediaStack:
    """Ordered media regions along +Z at one lateral location.

    Regions start at strictly increasing depths; the stack is defined from the
    first region's start down to ``z_end_um``.  Paths outside that range are
    planning errors.
    """

    regions: tuple
    z_end_um: float

    def __post_init__(self):
        if not self.regions:
            raise ValueError("media stack needs at least one region")
        starts = [r.z_start_um for r in self.regions]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("media boundaries must be strictly increasing in z")
        if any(r.n < 1.0 for r in self.regions):
            raise ValueError("refractive indices must be >= 1")
        if self.z_end_um <= starts[-1]:
            raise ValueError("stack end must lie below the last boundary")
        object.__setattr__(self, "regions", tuple(self.regions))

    @property
    def z_start_um(self) -> float:
        return self.regions[0].z_start_um

    def segments(self, z_from_um: float, z_to_um: float):
        """(n, signed optical length) pieces covering [z_from, z_to]."""
        lo, hi = sorted((z_from_um, z_to_um))
        if lo < self.z_start_um - 1e-9 or hi > self.z_end_um + 1e-9:
            raise PlanningError(
                f"path [{lo:.1f}, {hi:.1f}] um exits the media stack range "
                f"[{self.z_start_um:.1f}, {self.z_end_um:.1f}] um"
            )
        sign = 1.0 if z_to_um >= z_from_um else -1.0
        edges = [r.z_start_um for r in self.regions] + [self.z_end_um]
        out = []
        for region, r_lo, r_hi in zip(self.regions, edges[:-1], edges[1:]):
            seg = max(0.0, min(hi, r_hi) - max(lo, r_lo))
            if seg > 0:
                out.append((region.n, sign * seg))
        return out


def build_media_stack(fluid_z_um, ilm_z_um: float, rpe_z_um: float,
                      indices: MediaIndices, margin_um: float = 0.0) -> MediaStack:
    """Open-sky stack: air above the fluid surface, vitreous to the ILM,
    tissue from the ILM to the RPE (+margin).  ``fluid_z_um=None`` starts the
    vitreous at depth zero (no air gap)."""
    if not np.isfinite(ilm_z_um) or not np.isfinite(rpe_z_um):
        raise PlanningError("ILM/RPE boundaries are undefined at the target column")
    if rpe_z_um <= ilm_z_um:
        raise PlanningError("RPE boundary must be deeper than ILM")
    regions = []
    if fluid_z_um is not None and np.isfinite(fluid_z_um) and fluid_z_um > 0:
        regions.append(MediaRegion("air", indices.n_air, 0.0))
        regions.append(MediaRegion("vitreous", indices.n_vitreous, float(fluid_z_um)))
    else:
        regions.append(MediaRegion("vitreous", indices.n_vitreous, 0.0))
    regions.append(MediaRegion("tissue", indices.n_tissue, float(ilm_z_um)))
    return MediaStack(regions=tuple(regions), z_end_um=float(rpe_z_um) + float(margin_um))


@dataclass(frozen=True)
class Line3D:
    point_um: np.ndarray
    direction: np.ndarray

    def at(self, s: float) -> np.ndarray:
        return self.point_um + s * self.direction


def insertion_line(target_um, pose: NeedlePose) -> Line3D:
    """The 3D line through the target parallel to the needle axis."""
    v = np.asarray(target_um, dtype=np.float64)
    d = pose.direction
    return Line3D(point_um=v, direction=d / np.linalg.norm(d))


@dataclass(frozen=True)
class InsertionPlan:
    """Decomposed trajectory plus the refraction-corrected execution vector."""

    target_um: np.ndarray
    tip_um: np.ndarray
    direction: np.ndarray
    j_um: np.ndarray
    t_a_um: np.ndarray
    t_b_um: np.ndarray
    t_b_corrected_um: np.ndarray | None = None
    robot_cmd_a_um: np.ndarray | None = None
    robot_cmd_b_um: np.ndarray | None = None

    def to_json(self) -> str:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()
        return json.dumps({
            "target_um": arr(self.target_um),
            "J_um": arr(self.j_um),
            "tA_um": arr(self.t_a_um),
            "tB_um": arr(self.t_b_um),
            "tB_corrected_um": arr(self.t_b_corrected_um),
            "robot_cmds_um": {
                "A": arr(self.robot_cmd_a_um),
                "B": arr(self.robot_cmd_b_um),
            },
        })


def plan_trajectory(pose: NeedlePose, target_um) -> InsertionPlan:
    """Decompose the move to the target per the alignment constraints.

    Fails for a horizontal needle (the insertion line never crosses the tip's
    horizontal plane) and for targets behind the tip, which would require
    retraction.
    """
    v = np.asarray(target_um, dtype=np.float64)
    tip = pose.tip_um
    d = pose.direction
    if abs(d[2]) < 1e-9:
        raise PlanningError("horizontal needle: insertion line never crosses the tip plane")

    s_star = (tip[2] - v[2]) / d[2]
    j = v + s_star * d
    t_a = j - tip
    t_b = v - j
    if t_b @ d <= _EPS:
        raise PlanningError("target lies behind the tip along the needle axis; "
                            "retraction is not planned")
    return InsertionPlan(target_um=v, tip_um=tip.copy(), direction=d,
                         j_um=j, t_a_um=t_a, t_b_um=t_b)


def refraction_correct(t_b_um, entry_point_um, media: MediaStack) -> np.ndarray:
    """Convert the optical advance t_B into the physical translation to execute.

    The z extent is split at the media boundaries; each optical segment is
    divided by its medium's index.  Lateral components pass through unchanged,
    and with all indices equal to 1 the operation is the identity.
    """
    t_b = np.asarray(t_b_um, dtype=np.float64)
    entry = np.asarray(entry_point_um, dtype=np.float64)
    z0 = entry[2]
    z1 = z0 + t_b[2]
    corrected_z = sum(length / n for n, length in media.segments(z0, z1))
    return np.array([t_b[0], t_b[1], corrected_z])


def second_virtual_bscan(target_um, theta_z: float,
                         lateral_extent_um=None) -> PlaneSpec:
    """Tool-aligned plane shifted to pass through the target point."""
    v = np.asarray(target_um, dtype=np.float64)
    plane = tool_aligned_plane(theta_z, v[0], v[1], lateral_extent_um=lateral_extent_um)
    return PlaneSpec(point_um=v, normal=plane.normal)

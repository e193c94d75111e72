"""Synthetic scenes with known ground truth, plus the simulated robot.

A scene owns analytic retina surfaces (fluid/vitreous top, ILM, RPE), a
straight-cylinder needle, layer appearance parameters, and noise settings.
Rendering is a pure function of (scene, seed): each B-scan is drawn from its
own RNG stream derived from (seed, b-scan index), so parallel and serial
rendering agree bit for bit.

Depth bookkeeping: the scene's surfaces and needle pose are ground truth in
*volume* (optical-depth) coordinates.  The robot moves in physical space;
its motion maps to the needle's apparent position through the piecewise
refractive stretch of the media stack (air is 1:1, deeper media scale by
their index).  This is what makes the planner's refraction-corrected t_B
land on the optically-selected target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace, asdict

import numpy as np

from octnav.pose import NeedlePose, direction_from_angles
from octnav.registration import build_registration
from octnav.segmentation import SoftMask
from octnav.slicing import VirtualBScan, SliceFrame
from octnav.trajectory import MediaIndices
from octnav.volume import IoctVolume, DEFAULT_DIMS, DEFAULT_SPACING_UM
from octnav.projection import AxialProjectionImage


@dataclass(frozen=True)
class SurfaceModel:
    """Smooth height field z(x, y) in um: base + linear tilt + Gaussian bumps.

    Bumps are (center_x_um, center_y_um, sigma_um, amplitude_um) tuples.
    """

    base_um: float
    tilt_x: float = 0.0          # um of depth per um of x
    tilt_y: float = 0.0
    bumps: tuple = ()

    def depth_um(self, x_um, y_um):
        x = np.asarray(x_um, dtype=np.float64)
        y = np.asarray(y_um, dtype=np.float64)
        z = self.base_um + self.tilt_x * x + self.tilt_y * y
        for cx, cy, sigma, amp in self.bumps:
            z = z + amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma ** 2))
        return z


@dataclass(frozen=True)
class NeedleSpec:
    """Ground-truth needle: 5-DoF pose plus cylinder radius and length."""

    theta_z: float
    theta_y: float
    tip_um: tuple
    radius_um: float = 55.0
    length_um: float = 2200.0

    def __post_init__(self):
        if self.radius_um <= 0 or self.length_um <= 0:
            raise ValueError("needle radius and length must be positive")

    @property
    def pose(self) -> NeedlePose:
        return NeedlePose(self.theta_z, self.theta_y, np.asarray(self.tip_um, dtype=np.float64))

    @property
    def direction(self) -> np.ndarray:
        return direction_from_angles(self.theta_z, self.theta_y)


@dataclass(frozen=True)
class LayerAppearance:
    fluid_amp: float = 2500.0
    fluid_sigma_um: float = 6.0
    ilm_amp: float = 14000.0
    ilm_sigma_um: float = 12.0
    rpe_amp: float = 16000.0
    rpe_sigma_um: float = 15.0
    interior: float = 4000.0
    needle_brightness: float = 50000.0
    shadow_factor: float = 0.2


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class PhantomScene:
    """Complete ground-truth description of one synthetic acquisition."""

    ilm_surface: SurfaceModel
    rpe_surface: SurfaceModel
    fluid_surface: SurfaceModel | None = None
    needle: NeedleSpec | None = None
    appearance: LayerAppearance = field(default_factory=LayerAppearance)
    media: MediaIndices = field(default_factory=MediaIndices)
    speckle_sigma: float = 0.0       # relative sigma of the log-normal multiplier
    bscan_dropout_prob: float = 0.0
    rng_seed: int = 0
    dims: tuple = DEFAULT_DIMS
    spacing_um: tuple = DEFAULT_SPACING_UM
    name: str = "phantom"

    def __post_init__(self):
        if not 0.0 <= self.bscan_dropout_prob <= 1.0:
            raise ValueError("dropout probability must be in [0, 1]")
        if self.speckle_sigma < 0:
            raise ValueError("speckle sigma must be non-negative")
        # sanity-check layer ordering on a coarse lateral grid
        ex = (self.dims[0] - 1) * self.spacing_um[0]
        ey = (self.dims[1] - 1) * self.spacing_um[1]
        gx, gy = np.meshgrid(np.linspace(0, ex, 21), np.linspace(0, ey, 21))
        ilm = self.ilm_surface.depth_um(gx, gy)
        rpe = self.rpe_surface.depth_um(gx, gy)
        if not np.all(rpe > ilm):
            raise SceneError("RPE surface must be strictly deeper than ILM everywhere")
        if self.fluid_surface is not None:
            fl = self.fluid_surface.depth_um(gx, gy)
            if not np.all(fl < ilm):
                raise SceneError("fluid surface must lie above the ILM everywhere")

    # -- lateral grids -------------------------------------------------------

    @property
    def extent_um(self) -> tuple[float, float, float]:
        x, y, z = self.dims
        sx, sy, sz = self.spacing_um
        return ((x - 1) * sx, (y - 1) * sy, (z - 1) * sz)

    def with_needle_tip(self, tip_um) -> "PhantomScene":
        if self.needle is None:
            raise SceneError("scene has no needle")
        return replace(self, needle=replace(self.needle, tip_um=tuple(np.asarray(tip_um, float))))

    # -- optical <-> physical depth maps --------------------------------------

    def _boundaries_at(self, x_um, y_um):
        """(fluid_opt, ilm_opt, ilm_phys) depths at a lateral position."""
        ilm_opt = self.ilm_surface.depth_um(x_um, y_um)
        if self.fluid_surface is None:
            fluid = np.zeros_like(np.asarray(ilm_opt, dtype=np.float64))
        else:
            fluid = self.fluid_surface.depth_um(x_um, y_um)
        ilm_phys = fluid + (ilm_opt - fluid) / self.media.n_vitreous
        return fluid, ilm_opt, ilm_phys

    def optical_from_physical(self, point_um) -> np.ndarray:
        p = np.asarray(point_um, dtype=np.float64)
        fluid, ilm_opt, ilm_phys = self._boundaries_at(p[0], p[1])
        z = p[2]
        if z <= fluid:
            z_opt = z
        elif z <= ilm_phys:
            z_opt = fluid + self.media.n_vitreous * (z - fluid)
        else:
            z_opt = ilm_opt + self.media.n_tissue * (z - ilm_phys)
        return np.array([p[0], p[1], z_opt])

    def physical_from_optical(self, point_um) -> np.ndarray:
        p = np.asarray(point_um, dtype=np.float64)
        fluid, ilm_opt, ilm_phys = self._boundaries_at(p[0], p[1])
        z = p[2]
        if z <= fluid:
            z_phys = z
        elif z <= ilm_opt:
            z_phys = fluid + (z - fluid) / self.media.n_vitreous
        else:
            z_phys = ilm_phys + (z - ilm_opt) / self.media.n_tissue
        return np.array([p[0], p[1], z_phys])

    # -- analytic needle geometry ---------------------------------------------

    def needle_chords(self, x_um: np.ndarray, y_um: np.ndarray):
        """Depth interval (um) where each A-scan crosses the needle cylinder.

        Returns (z_enter, z_exit, hit) arrays broadcast over the lateral grid;
        non-intersecting A-scans have hit=False.  Derived directly from the
        cylinder equation around the scene's needle axis.
        """
        n = self.needle
        if n is None:
            raise SceneError("scene has no needle")
        tip = np.asarray(n.tip_um, dtype=np.float64)
        d = n.direction
        r2 = n.radius_um ** 2

        ax = np.asarray(x_um, dtype=np.float64) - tip[0]
        by = np.asarray(y_um, dtype=np.float64) - tip[1]
        c0 = ax * d[0] + by * d[1]
        # |w|^2 - (w . d)^2 <= R^2 with w = (ax, by, z - tip_z): quadratic in dz
        a = 1.0 - d[2] ** 2
        b = -2.0 * c0 * d[2]
        c = ax ** 2 + by ** 2 - c0 ** 2 - r2
        if a <= 1e-12:
            raise SceneError("vertical needle axis is not supported")
        disc = b ** 2 - 4.0 * a * c
        hit = disc > 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        g1 = (-b - sq) / (2.0 * a)
        g2 = (-b + sq) / (2.0 * a)

        # clamp to the finite cylinder: s = -(w . d) in [0, length]
        # s(gz) = -(c0 + gz * dz) -> gz bounds from s in [0, L]
        if abs(d[2]) > 1e-12:
            s_lo = (-c0 - 0.0) / d[2]          # gz where s = 0
            s_hi = (-c0 - n.length_um) / d[2]  # gz where s = L
            g_min = np.minimum(s_lo, s_hi)
            g_max = np.maximum(s_lo, s_hi)
            g1 = np.maximum(g1, g_min)
            g2 = np.minimum(g2, g_max)
        hit = hit & (g2 >= g1)
        z_enter = tip[2] + g1
        z_exit = tip[2] + g2
        return z_enter, z_exit, hit

    def needle_axis_lateral_score(self, x_um, y_um) -> np.ndarray:
        """Graded footprint score: 1 on the needle axis, 0 beyond one radius.

        Uses the lateral projection of the axis *segment*, so the tilted end
        cap's lateral shadow does not pull the footprint past the tip and the
        tip-extremum estimator stays unbiased.
        """
        n = self.needle
        if n is None:
            raise SceneError("scene has no needle")
        tip = np.asarray(n.tip_um[:2], dtype=np.float64)
        d3 = n.direction
        u = d3[:2]
        seg_len = n.length_um * np.linalg.norm(u)
        if seg_len < 1e-9:
            raise SceneError("needle is vertical; projection footprint undefined")
        u = u / np.linalg.norm(u)

        px = np.asarray(x_um, dtype=np.float64) - tip[0]
        py = np.asarray(y_um, dtype=np.float64) - tip[1]
        t = px * u[0] + py * u[1]                    # 0 at tip, negative toward tail
        dist = np.hypot(px - t * u[0], py - t * u[1])
        score = np.clip(1.0 - dist / n.radius_um, 0.0, 1.0)
        return np.where((t <= 0.0) & (t >= -seg_len), score, 0.0)


# -- rendering ----------------------------------------------------------------

def _add_band(slab: np.ndarray, centers_um: np.ndarray, amp: float,
              sigma_um: float, sz_um: float) -> None:
    """Add a Gaussian depth band centred per-column at centers_um (in place)."""
    nz = slab.shape[1]
    half = max(1, int(np.ceil(4.0 * sigma_um / sz_um)))
    rel = np.arange(-half, half + 1)
    ci = np.round(centers_um / sz_um).astype(np.intp)
    zi = ci[:, None] + rel[None, :]
    np.clip(zi, 0, nz - 1, out=zi)
    z_um = zi * sz_um
    vals = amp * np.exp(-((z_um - centers_um[:, None]) ** 2) / (2.0 * sigma_um ** 2))
    rows = np.arange(slab.shape[0])[:, None]
    slab[rows, zi] += vals.astype(slab.dtype)


def render_volume(scene: PhantomScene) -> IoctVolume:
    """Render the scene to a volume; deterministic given the scene's seed."""
    x, y, z = scene.dims
    sx, sy, sz = scene.spacing_um
    app = scene.appearance

    xs = np.arange(x) * sx
    z_um = np.arange(z) * sz

    if scene.needle is not None:
        gy, gx = np.meshgrid(np.arange(y) * sy, xs, indexing="ij")
        z_en, z_ex, hit = scene.needle_chords(gx, gy)
        if not np.any(hit & (z_ex >= 0) & (z_en <= z_um[-1])):
            raise SceneError("needle entirely outside the scan region")

    slabs = np.empty((y, x, z), dtype=np.uint16)
    for iy in range(y):
        rng = np.random.default_rng([scene.rng_seed, iy])
        dropped = rng.random() < scene.bscan_dropout_prob
        if dropped:
            slabs[iy] = 0
            continue

        y_um = iy * sy
        ilm = scene.ilm_surface.depth_um(xs, y_um)
        rpe = scene.rpe_surface.depth_um(xs, y_um)
        if not np.all(rpe > ilm):
            raise SceneError("RPE surface must be strictly deeper than ILM everywhere")

        slab = np.zeros((x, z), dtype=np.float32)
        interior = (z_um[None, :] >= ilm[:, None]) & (z_um[None, :] <= rpe[:, None])
        slab[interior] = app.interior
        _add_band(slab, ilm, app.ilm_amp, app.ilm_sigma_um, sz)
        _add_band(slab, rpe, app.rpe_amp, app.rpe_sigma_um, sz)
        if scene.fluid_surface is not None:
            fluid = scene.fluid_surface.depth_um(xs, y_um)
            _add_band(slab, fluid, app.fluid_amp, app.fluid_sigma_um, sz)

        if scene.needle is not None:
            ze, zx_, h = z_en[iy], z_ex[iy], hit[iy]
            shadow = h[:, None] & (z_um[None, :] > zx_[:, None])
            slab[shadow] *= app.shadow_factor
            needle_px = h[:, None] & (z_um[None, :] >= ze[:, None]) \
                & (z_um[None, :] <= zx_[:, None])
            slab[needle_px] = app.needle_brightness

        if scene.speckle_sigma > 0:
            nz_mask = slab > 0
            count = int(nz_mask.sum())
            if count:
                g = rng.standard_normal(count).astype(np.float32)
                s = np.float32(scene.speckle_sigma)
                slab[nz_mask] *= np.exp(s * g - 0.5 * s * s)

        np.clip(slab, 0, 65535, out=slab)
        slabs[iy] = slab.astype(np.uint16)

    return IoctVolume(data=slabs, spacing_um=scene.spacing_um, source=scene.name)


# -- simulated robot -----------------------------------------------------------

class SimulatedRobot:
    """Translation-only robot with per-axis Gaussian move noise.

    The robot frame is related to the volume frame by the yaw-only axes map
    C(theta_z) (the same construction the online registration estimates); the
    tip is tracked in robot coordinates of *physical* space.  The default
    noise sigma of 5 um per axis matches the measured per-500-um-move
    repeatability the simulation stands in for.
    """

    def __init__(self, tip_robot_um, frame_theta_z: float,
                 sigma_move_um: float = 5.0, rng_seed: int = 0):
        if sigma_move_um < 0:
            raise ValueError("sigma_move_um must be non-negative")
        self.tip_robot_um = np.asarray(tip_robot_um, dtype=np.float64).copy()
        self.frame_theta_z = float(frame_theta_z)
        self.sigma_move_um = float(sigma_move_um)
        self._rng = np.random.default_rng(rng_seed)
        self._frame = build_registration(self.frame_theta_z).matrix

    @classmethod
    def from_scene(cls, scene: PhantomScene, sigma_move_um: float = 5.0,
                   rng_seed: int = 0) -> "SimulatedRobot":
        if scene.needle is None:
            raise SceneError("scene has no needle to mount on the robot")
        tip_phys = scene.physical_from_optical(np.asarray(scene.needle.tip_um, float))
        tip_robot = build_registration(scene.needle.theta_z).matrix.T @ tip_phys
        return cls(tip_robot, frame_theta_z=scene.needle.theta_z,
                   sigma_move_um=sigma_move_um, rng_seed=rng_seed)

    def apply_translation(self, t_robot_um) -> "SimulatedRobot":
        """Execute a robot-frame translation; noise is drawn per commanded move."""
        t = np.asarray(t_robot_um, dtype=np.float64)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        eps = (self._rng.normal(0.0, self.sigma_move_um, size=3)
               if self.sigma_move_um > 0 else np.zeros(3))
        self.tip_robot_um = self.tip_robot_um + t + eps
        return self

    def tip_physical_volume_um(self) -> np.ndarray:
        """Tip position in volume-frame physical coordinates."""
        return self._frame @ self.tip_robot_um

    def tip_optical_um(self, scene: PhantomScene) -> np.ndarray:
        return scene.optical_from_physical(self.tip_physical_volume_um())

    def sync_scene(self, scene: PhantomScene) -> PhantomScene:
        """Scene with the needle moved to this robot's current (optical) tip."""
        return scene.with_needle_tip(self.tip_optical_um(scene))


def reacquire(scene: PhantomScene, robot: SimulatedRobot) -> IoctVolume:
    """Re-render with the needle synchronized to the robot state."""
    return render_volume(robot.sync_scene(scene))


# -- ground-truth oracle segmenter ----------------------------------------------

class OracleSegmenter:
    """Pixel-exact masks from the scene's analytic geometry."""

    name = "oracle"

    def __init__(self, scene: PhantomScene, layer_sigma_px: float = 2.0):
        self.scene = scene
        self.layer_sigma_px = float(layer_sigma_px)

    def segment_projection(self, image: AxialProjectionImage) -> SoftMask:
        ny, nx = image.pixels.shape
        sx, sy = image.spacing_xy_um
        gy, gx = np.meshgrid(np.arange(ny) * sy, np.arange(nx) * sx, indexing="ij")
        return SoftMask(scores=self.scene.needle_axis_lateral_score(gx, gy), label="needle")

    def segment_bscan(self, bscan: VirtualBScan) -> dict[str, SoftMask]:
        frame = bscan.frame
        cols = frame.column_positions()                      # (U, 2)

        needle = np.zeros((frame.height, frame.width))
        n = self.scene.needle
        if n is not None:
            tip = np.asarray(n.tip_um, dtype=np.float64)
            d = n.direction
            # needle lives in a bounded z window; skip the rest of the grid
            z_span = (tip[2], tip[2] - n.length_um * d[2])
            z_lo = max(0, int((min(z_span) - n.radius_um) / frame.sz_um) - 1)
            z_hi = min(frame.height, int((max(z_span) + n.radius_um) / frame.sz_um) + 2)
            if z_hi > z_lo:
                z_um = np.arange(z_lo, z_hi) * frame.sz_um
                wx = cols[:, 0] - tip[0]
                wy = cols[:, 1] - tip[1]
                wz = z_um[:, None] - tip[2]
                wd = (wx * d[0] + wy * d[1])[None, :] + wz * d[2]
                dist2 = (wx ** 2 + wy ** 2)[None, :] + wz ** 2 - wd ** 2
                s = -wd
                inside = (s >= 0) & (s <= n.length_um)
                dist = np.sqrt(np.maximum(dist2, 0.0))
                needle[z_lo:z_hi] = np.where(
                    inside, np.clip(1.0 - dist / n.radius_um, 0.0, 1.0), 0.0)

        sig_um = self.layer_sigma_px * frame.sz_um
        ilm_c = self.scene.ilm_surface.depth_um(cols[:, 0], cols[:, 1])
        rpe_c = self.scene.rpe_surface.depth_um(cols[:, 0], cols[:, 1])
        ilm = _banded_gaussian(frame.height, frame.sz_um, ilm_c, sig_um)
        rpe = _banded_gaussian(frame.height, frame.sz_um, rpe_c, sig_um)
        for m in (needle, ilm, rpe):
            m[:, ~bscan.valid_columns] = 0.0

        return {
            "needle": SoftMask(scores=needle, label="needle"),
            "ilm": SoftMask(scores=ilm, label="ilm"),
            "rpe": SoftMask(scores=rpe, label="rpe"),
        }

    def fluid_depths(self, bscan: VirtualBScan) -> np.ndarray:
        cols = bscan.frame.column_positions()
        if self.scene.fluid_surface is None:
            return np.full(bscan.frame.width, np.nan)
        return self.scene.fluid_surface.depth_um(cols[:, 0], cols[:, 1])


def _banded_gaussian(height: int, sz_um: float, centers_um: np.ndarray,
                     sigma_um: float) -> np.ndarray:
    """(height, U) Gaussian score band around per-column centres, zero elsewhere."""
    out = np.zeros((height, centers_um.size))
    half = max(1, int(np.ceil(3.8 * sigma_um / sz_um)))   # exp(-3.8^2/2) < 1e-3
    rel = np.arange(-half, half + 1)
    ci = np.round(centers_um / sz_um).astype(np.intp)
    zi = ci[None, :] + rel[:, None]
    ok = (zi >= 0) & (zi < height)
    zi_c = np.clip(zi, 0, height - 1)
    vals = np.exp(-((zi_c * sz_um - centers_um[None, :]) ** 2) / (2 * sigma_um ** 2))
    vals[vals < 1e-3] = 0.0
    vals[~ok] = 0.0
    np.put_along_axis(out, zi_c, vals, axis=0)
    return out


# -- scene (de)serialization -----------------------------------------------------

def scene_to_json(scene: PhantomScene) -> str:
    def surf(s):
        return None if s is None else {
            "base_um": s.base_um, "tilt_x": s.tilt_x, "tilt_y": s.tilt_y,
            "bumps": [list(b) for b in s.bumps],
        }
    obj = {
        "name": scene.name,
        "dims": list(scene.dims),
        "spacing_um": list(scene.spacing_um),
        "ilm_surface": surf(scene.ilm_surface),
        "rpe_surface": surf(scene.rpe_surface),
        "fluid_surface": surf(scene.fluid_surface),
        "needle": None if scene.needle is None else {
            "theta_z": scene.needle.theta_z, "theta_y": scene.needle.theta_y,
            "tip_um": list(scene.needle.tip_um),
            "radius_um": scene.needle.radius_um, "length_um": scene.needle.length_um,
        },
        "appearance": asdict(scene.appearance),
        "media": {"n_air": scene.media.n_air, "n_vitreous": scene.media.n_vitreous,
                  "n_tissue": scene.media.n_tissue},
        "speckle_sigma": scene.speckle_sigma,
        "bscan_dropout_prob": scene.bscan_dropout_prob,
        "rng_seed": scene.rng_seed,
    }
    return json.dumps(obj, indent=2)


def scene_from_json(text: str) -> PhantomScene:
    obj = json.loads(text)

    def surf(o):
        return None if o is None else SurfaceModel(
            base_um=o["base_um"], tilt_x=o.get("tilt_x", 0.0), tilt_y=o.get("tilt_y", 0.0),
            bumps=tuple(tuple(b) for b in o.get("bumps", [])),
        )
    needle = obj.get("needle")
    return PhantomScene(
        ilm_surface=surf(obj["ilm_surface"]),
        rpe_surface=surf(obj["rpe_surface"]),
        fluid_surface=surf(obj.get("fluid_surface")),
        needle=None if needle is None else NeedleSpec(
            theta_z=needle["theta_z"], theta_y=needle["theta_y"],
            tip_um=tuple(needle["tip_um"]),
            radius_um=needle.get("radius_um", 55.0),
            length_um=needle.get("length_um", 2200.0),
        ),
        appearance=LayerAppearance(**obj.get("appearance", {})),
        media=MediaIndices(**obj.get("media", {})),
        speckle_sigma=obj.get("speckle_sigma", 0.0),
        bscan_dropout_prob=obj.get("bscan_dropout_prob", 0.0),
        rng_seed=obj.get("rng_seed", 0),
        dims=tuple(obj.get("dims", DEFAULT_DIMS)),
        spacing_um=tuple(obj.get("spacing_um", DEFAULT_SPACING_UM)),
        name=obj.get("name", "phantom"),
    )


def default_scene(seed: int = 0, speckle_sigma: float = 0.0,
                  dropout_prob: float = 0.0, theta_z: float = np.deg2rad(15.0),
                  theta_y: float = np.deg2rad(20.0),
                  tip_um=(1400.0, 1100.0, 700.0), name: str = "default") -> PhantomScene:
    """Canonical desk-scale scene: gentle retina tilt, needle above the fluid."""
    ilm = SurfaceModel(base_um=1750.0, tilt_x=0.03, tilt_y=0.02,
                       bumps=((1250.0, 1250.0, 700.0, -60.0),))
    rpe = SurfaceModel(base_um=2030.0, tilt_x=0.03, tilt_y=0.02,
                       bumps=((1250.0, 1250.0, 700.0, -60.0),))
    fluid = SurfaceModel(base_um=900.0)
    needle = NeedleSpec(theta_z=theta_z, theta_y=theta_y, tip_um=tuple(tip_um))
    return PhantomScene(ilm_surface=ilm, rpe_surface=rpe, fluid_surface=fluid,
                        needle=needle, speckle_sigma=speckle_sigma,
                        bscan_dropout_prob=dropout_prob, rng_seed=seed, name=name)

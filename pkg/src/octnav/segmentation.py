"""Pluggable segmentation of the projection image and of virtual B-scans.

Two families of segmenters implement the same small protocol:

* ``BaselineSegmenter`` (this module): classical brightness/geometry
  heuristics, no learning.  Projection: contrast against a per-column median
  background with dropout-row masking.  B-scan: the needle is the brightest
  connected structure, retinal layers are the dominant intensity ridges.
* ``OracleSegmenter`` (phantom module): exact masks from scene ground truth.

Scores are always in [0, 1]; downstream consumers keep only the
highest-confidence fraction via :func:`confidence_filter`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from octnav.projection import AxialProjectionImage
from octnav.slicing import VirtualBScan


@dataclass(frozen=True)
class SoftMask:
    """Per-pixel confidence map for one class."""

    scores: np.ndarray
    label: str

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 2:
            raise ValueError("mask scores must be 2D")
        if s.size and (not np.all(np.isfinite(s)) or s.min() < 0 or s.max() > 1):
            raise ValueError("mask scores must be finite and lie in [0, 1]")
        object.__setattr__(self, "scores", s)

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape


def confidence_filter(mask: SoftMask, fraction: float) -> np.ndarray:
    """Exactly ceil(fraction * W * H) highest-scoring pixels as (row, col) pairs.

    Ties at the cut boundary are broken by row-major pixel order, so the
    output is fully deterministic.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    flat = mask.scores.ravel()
    n = flat.size
    k = int(np.ceil(fraction * n))
    if k >= n:
        chosen = np.arange(n)
    else:
        # k-th highest value, then strict winners plus row-major-first ties
        cut = np.partition(flat, n - k)[n - k]
        above = np.flatnonzero(flat > cut)
        ties = np.flatnonzero(flat == cut)
        chosen = np.concatenate([above, ties[: k - above.size]])
        chosen.sort()
    w = mask.scores.shape[1]
    return np.stack([chosen // w, chosen % w], axis=1)


@dataclass(frozen=True)
class LayerBoundaries:
    """Per-column ILM and RPE depths (fractional pixels) with validity flags."""

    ilm_z: np.ndarray
    rpe_z: np.ndarray
    valid: np.ndarray

    def depths_um(self, sz_um: float) -> tuple[np.ndarray, np.ndarray]:
        return self.ilm_z * sz_um, self.rpe_z * sz_um


def extract_layer_boundaries(ilm: SoftMask, rpe: SoftMask,
                             min_column_score: float = 3.0) -> LayerBoundaries:
    """Score-weighted centroid depth per column for each layer class.

    Columns whose total class score falls below ``min_column_score`` (e.g.
    under the instrument shadow), or where the extracted RPE is not deeper
    than the ILM, are marked invalid.
    """
    if ilm.shape != rpe.shape:
        raise ValueError("ILM and RPE masks must share dimensions")
    z = np.arange(ilm.shape[0], dtype=np.float64)[:, None]

    def centroid(scores):
        tot = scores.sum(axis=0)
        ok = tot >= min_column_score
        with np.errstate(invalid="ignore", divide="ignore"):
            c = (scores * z).sum(axis=0) / tot
        c[~ok] = np.nan
        return c, ok

    ilm_z, ilm_ok = centroid(ilm.scores)
    rpe_z, rpe_ok = centroid(rpe.scores)
    valid = ilm_ok & rpe_ok & (rpe_z > ilm_z)
    ilm_z[~valid] = np.nan
    rpe_z[~valid] = np.nan
    return LayerBoundaries(ilm_z=ilm_z, rpe_z=rpe_z, valid=valid)


@dataclass
class BaselineParams:
    smooth_sigma: float = 1.5
    noise_floor_k: float = 4.0          # projection: zero scores below k * MAD
    noise_floor_rel: float = 0.05       # ... and below this fraction of the peak
    min_contrast: float = 30.0          # projection peak contrast to accept any pixel
    needle_rel_threshold: float = 0.55  # of the slice maximum
    needle_abs_min: float = 25000.0     # slice intensity floor for needle pixels
    layer_rel_threshold: float = 0.4    # of the robust layer peak
    fluid_intensity_threshold: float = 1200.0


class BaselineSegmenter:
    """Classical heuristic segmenter; stateless after construction."""

    name = "baseline"

    def __init__(self, params: BaselineParams | None = None):
        self.params = params or BaselineParams()

    # -- projection ---------------------------------------------------------

    def segment_projection(self, image: AxialProjectionImage) -> SoftMask:
        img = image.pixels
        dropped = ~np.any(img > 0, axis=1)
        live = img[~dropped]
        if live.size == 0:
            return SoftMask(scores=np.zeros_like(img), label="needle")

        background = np.median(live, axis=0)
        resid = img - background[None, :]
        resid[dropped] = 0.0
        resid[resid < 0] = 0.0

        flat = resid[~dropped].ravel()
        mad = np.median(np.abs(flat - np.median(flat)))
        floor = max(self.params.noise_floor_k * 1.4826 * mad,
                    self.params.noise_floor_rel * resid.max())
        resid[resid <= floor] = 0.0

        peak = resid.max()
        if peak <= self.params.min_contrast:
            return SoftMask(scores=np.zeros_like(resid), label="needle")
        return SoftMask(scores=resid / peak, label="needle")

    # -- virtual B-scan -----------------------------------------------------

    def _smooth(self, bscan: VirtualBScan) -> np.ndarray:
        img = bscan.image.copy()
        img[:, ~bscan.valid_columns] = 0.0
        return ndimage.gaussian_filter(img, self.params.smooth_sigma)

    def _needle_scores(self, smooth: np.ndarray) -> np.ndarray:
        p = self.params
        thr_needle = max(p.needle_rel_threshold * smooth.max(), p.needle_abs_min)
        peak = smooth.max()
        if peak > thr_needle:
            return np.clip((smooth - thr_needle) / (peak - thr_needle), 0.0, 1.0)
        return np.zeros_like(smooth)

    def segment_bscan(self, bscan: VirtualBScan) -> dict[str, SoftMask]:
        p = self.params
        smooth = self._smooth(bscan)
        needle = self._needle_scores(smooth)

        # layers: dominant ridges once needle pixels are blanked out; the
        # reference peak uses an upper percentile so instrument shadow over
        # much of the slice cannot drag the threshold down
        layers_img = np.where(needle > 0.05, 0.0, smooth)
        col_peaks = layers_img.max(axis=0)
        ref = (np.percentile(col_peaks[bscan.valid_columns], 75)
               if bscan.valid_columns.any() else 0.0)
        ilm_scores = np.zeros_like(smooth)
        rpe_scores = np.zeros_like(smooth)
        if ref > 0:
            t_layer = p.layer_rel_threshold * ref
            supra = layers_img > t_layer
            ilm_run, rpe_run = _first_and_last_runs(supra)
            norm = np.clip(layers_img / ref, 0.0, 1.0)
            ilm_scores[ilm_run] = norm[ilm_run]
            rpe_scores[rpe_run] = norm[rpe_run]

        return {
            "needle": SoftMask(scores=needle, label="needle"),
            "ilm": SoftMask(scores=ilm_scores, label="ilm"),
            "rpe": SoftMask(scores=rpe_scores, label="rpe"),
        }

    def fluid_depths(self, bscan: VirtualBScan) -> np.ndarray:
        """Per-column depth (um) of the fluid/vitreous surface line, NaN if none.

        Detects the first faint supra-threshold reflection, skipping the
        instrument itself (and its immediate surroundings) which is brighter
        and usually above the fluid.
        """
        smooth = self._smooth(bscan)
        blanked = np.where(ndimage.maximum_filter(
            self._needle_scores(smooth), size=(7, 3)) > 0, 0.0, smooth)
        above = blanked > self.params.fluid_intensity_threshold
        has = above.any(axis=0)
        first = np.where(has, np.argmax(above, axis=0), -1).astype(np.float64)
        depths = first * bscan.frame.sz_um
        depths[first < 0] = np.nan
        return depths


def _first_and_last_runs(supra: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks of the first and last contiguous True-run per column.

    Columns with fewer than two runs contribute only to the first-run mask
    (the topmost structure), keeping the ILM-above-RPE ordering safe.
    """
    z, u = supra.shape
    idx = np.arange(z)[:, None]

    any_col = supra.any(axis=0)
    first_start = np.where(any_col, np.argmax(supra, axis=0), z)
    gap_after = (~supra) & (idx >= first_start[None, :])
    first_end = np.where(gap_after.any(axis=0), np.argmax(gap_after, axis=0), z)
    first_run = (idx >= first_start[None, :]) & (idx < first_end[None, :])

    rev = supra[::-1]
    last_start_rev = np.where(any_col, np.argmax(rev, axis=0), z)
    gap_rev = (~rev) & (idx >= last_start_rev[None, :])
    last_end_rev = np.where(gap_rev.any(axis=0), np.argmax(gap_rev, axis=0), z)
    last_run = ((idx >= last_start_rev[None, :]) & (idx < last_end_rev[None, :]))[::-1]

    # a single run is reported as ILM only
    only_one = any_col & (first_start == z - last_end_rev)
    last_run[:, only_one] = False
    return first_run, last_run

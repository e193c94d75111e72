"""Axial projection images: reduce every A-scan to one value.

The projection applies an operator along the depth axis of each A-scan,
producing a (Y, X) image whose pixel (x, y) depends only on A-scan (x, y).
The mean is accumulated in 64-bit integers so the result is exact and
independent of any internal parallelism or summation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from octnav.volume import IoctVolume

OPERATORS = ("mean", "min", "max")


@dataclass(frozen=True)
class AxialProjectionImage:
    """(Y, X) floating-point projection with the lateral spacing it inherits."""

    pixels: np.ndarray
    operator: str
    spacing_xy_um: tuple[float, float]
    source: str = ""

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


def axial_projection(volume: IoctVolume, operator: str = "mean",
                     z_window: tuple[int, int] | None = None) -> AxialProjectionImage:
    """Project the volume along Z with the given operator.

    ``z_window`` restricts the reduction to depth samples [lo, hi); the
    default covers the full A-scan.
    """
    if operator not in OPERATORS:
        raise ValueError(f"operator must be one of {OPERATORS}, got {operator!r}")
    data = volume.data
    if z_window is not None:
        lo, hi = z_window
        nz = volume.dims[2]
        if not (0 <= lo < hi <= nz):
            raise ValueError(f"z_window {z_window} outside [0, {nz}]")
        data = data[:, :, lo:hi]

    if operator == "mean":
        # uint32 cannot overflow: Z * 65535 < 2^32 for any realistic depth
        sums = data.sum(axis=2, dtype=np.uint32)
        pixels = sums / float(data.shape[2])
    elif operator == "min":
        pixels = data.min(axis=2).astype(np.float64)
    else:
        pixels = data.max(axis=2).astype(np.float64)

    sx, sy, _ = volume.spacing_um
    return AxialProjectionImage(pixels=pixels, operator=operator,
                                spacing_xy_um=(sx, sy), source=volume.source)

"""Volume data type, coordinate frames, and the ``.ioct`` on-disk format.

Frame convention: right-handed, X along the fast scan axis (A-scans within a
B-scan), Y along the slow axis (B-scan index), Z along the A-scan depth
(increasing with optical depth, i.e. downward into tissue).  Metric
coordinates are in micrometres with the origin at the centre of voxel
(0, 0, 0).

Voxels are stored A-scan-major: z fastest, then x, then y.  In memory that
is a C-contiguous ``uint16`` array of shape (Y, X, Z).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_DIMS = (1000, 100, 1024)
DEFAULT_SPACING_UM = (2.5, 25.0, 3.0)

_MAGIC_DTYPE = "u16"


class VolumeFormatError(ValueError):
    """Raised when an .ioct file does not match the declared format."""


@dataclass(frozen=True)
class IoctVolume:
    """Anisotropic 3D intensity grid with metric voxel spacing.

    ``data`` has shape (Y, X, Z) and dtype uint16; it is marked read-only
    after construction, so volumes can be shared freely across threads.
    """

    data: np.ndarray
    spacing_um: tuple[float, float, float]
    source: str = field(default="", compare=False)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.uint16)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"expected 3D (Y, X, Z) voxel grid, got shape {data.shape}")
        if len(self.spacing_um) != 3 or any(s <= 0 for s in self.spacing_um):
            raise ValueError(f"voxel spacing must be positive, got {self.spacing_um}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing_um", tuple(float(s) for s in self.spacing_um))

    @property
    def dims(self) -> tuple[int, int, int]:
        """(X, Y, Z) voxel counts."""
        y, x, z = self.data.shape
        return (x, y, z)

    @property
    def extent_um(self) -> tuple[float, float, float]:
        """Metric distance between the first and last voxel centre per axis."""
        x, y, z = self.dims
        sx, sy, sz = self.spacing_um
        return ((x - 1) * sx, (y - 1) * sy, (z - 1) * sz)

    def voxel_to_metric(self, index) -> np.ndarray:
        """Map a voxel index (ix, iy, iz) to micrometres; pure diagonal scaling."""
        idx = np.asarray(index, dtype=np.float64)
        x, y, z = self.dims
        if np.any(idx < 0) or np.any(idx >= (x, y, z)):
            raise IndexError(f"voxel index {index} outside dims {self.dims}")
        return idx * np.asarray(self.spacing_um)

    def metric_to_voxel(self, point_um) -> np.ndarray:
        """Map a metric point to a fractional voxel index (inverse of voxel_to_metric)."""
        p = np.asarray(point_um, dtype=np.float64)
        idx = p / np.asarray(self.spacing_um)
        x, y, z = self.dims
        if np.any(idx < 0) or np.any(idx >= (x, y, z)):
            raise IndexError(f"metric point {point_um} outside volume bounds")
        return idx

    def contains_metric(self, point_um) -> bool:
        p = np.asarray(point_um, dtype=np.float64)
        idx = p / np.asarray(self.spacing_um)
        x, y, z = self.dims
        return bool(np.all(idx >= 0) and np.all(idx < (x, y, z)))

    def native_bscan(self, i: int) -> np.ndarray:
        """B-scan slab ``i`` as an (X, Z) view — a verbatim copy, never interpolated."""
        x, y, z = self.dims
        if not 0 <= i < y:
            raise IndexError(f"B-scan index {i} out of range [0, {y})")
        return self.data[i]


def save_volume(volume: IoctVolume, path) -> None:
    """Write the ``.ioct`` format: one JSON header line, then raw LE voxels."""
    header = {
        "dims": list(volume.dims),
        "spacing_um": list(volume.spacing_um),
        "dtype": _MAGIC_DTYPE,
    }
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(volume.data.astype("<u2", copy=False).tobytes())


def load_volume(path) -> IoctVolume:
    """Load an ``.ioct`` file; voxels are bit-identical to the file payload."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such volume file: {path}")
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise VolumeFormatError(f"{path}: malformed header line") from exc
        for key in ("dims", "spacing_um", "dtype"):
            if key not in header:
                raise VolumeFormatError(f"{path}: header missing field {key!r}")
        if header["dtype"] != _MAGIC_DTYPE:
            raise VolumeFormatError(f"{path}: unsupported dtype {header['dtype']!r}")
        x, y, z = (int(v) for v in header["dims"])
        spacing = tuple(float(v) for v in header["spacing_um"])
        if min(x, y, z) < 1:
            raise VolumeFormatError(f"{path}: non-positive dims {header['dims']}")
        if any(s <= 0 for s in spacing):
            raise VolumeFormatError(f"{path}: non-positive spacing {header['spacing_um']}")
        payload = fh.read()
    expected = x * y * z * 2
    if len(payload) != expected:
        raise VolumeFormatError(
            f"{path}: payload is {len(payload)} bytes, header declares {expected}"
        )
    data = np.frombuffer(payload, dtype="<u2").reshape(y, x, z)
    return IoctVolume(data=data, spacing_um=spacing, source=str(path))

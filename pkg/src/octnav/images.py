"""Small helpers for exporting images (PGM for the CLI, PNG for the API)."""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
from PIL import Image


def write_pgm16(pixels: np.ndarray, path, sidecar: bool = True) -> None:
    """Write a float image as 16-bit binary PGM, linearly rescaled to [0, 65535].

    The original min/max are recorded in a JSON sidecar next to the file so the
    scaling is invertible.
    """
    img = np.asarray(pixels, dtype=np.float64)
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        scaled = (img - lo) / (hi - lo) * 65535.0
    else:
        scaled = np.zeros_like(img)
    data = np.round(scaled).astype(">u2")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())
    if sidecar:
        meta = {"min": lo, "max": hi, "width": img.shape[1], "height": img.shape[0]}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta))


def write_pgm8(pixels: np.ndarray, path) -> None:
    """Write scores in [0, 1] as an 8-bit PGM (mask inspection)."""
    img = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    data = np.round(img * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM written by this module."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height = (int(v) for v in parts[1].split())
    maxval = int(parts[2])
    dtype = ">u2" if maxval > 255 else np.uint8
    return np.frombuffer(parts[3], dtype=dtype)[: width * height].reshape(height, width)


def to_png_bytes(pixels: np.ndarray, lo: float | None = None,
                 hi: float | None = None) -> bytes:
    """Render a float image to 8-bit grayscale PNG bytes."""
    img = np.asarray(pixels, dtype=np.float64)
    lo = float(img.min()) if lo is None else lo
    hi = float(img.max()) if hi is None else hi
    if hi > lo:
        scaled = np.clip((img - lo) / (hi - lo), 0.0, 1.0)
    else:
        scaled = np.zeros_like(img)
    buf = io.BytesIO()
    Image.fromarray((scaled * 255.0).astype(np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()

"""Minimal 16-bit binary PGM writer/reader for inspection artifacts."""

from __future__ import annotations

import numpy as np

__all__ = ["write_pgm", "read_pgm"]

MAXVAL = 65535


def write_pgm(image: np.ndarray, path) -> None:
    """Write a 2D nonnegative array as a 16-bit PGM, scaled so max -> MAXVAL.

    An all-zero image is written as all zeros.  Scaling is linear, so
    brightness ordering of pixels is preserved.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {image.shape}")
    if np.any(image < 0) or not np.all(np.isfinite(image)):
        raise ValueError("image must be finite and nonnegative")
    peak = image.max()
    scaled = np.zeros_like(image) if peak == 0 else image * (MAXVAL / peak)
    pixels = np.round(scaled).astype(">u2")  # binary PGM 16-bit is big-endian
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{MAXVAL}\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary 16-bit PGM written by :func:`write_pgm`."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValueError(f"not a binary PGM: magic {magic!r}")
        w, h = (int(t) for t in fh.readline().split())
        maxval = int(fh.readline())
        if maxval != MAXVAL:
            raise ValueError(f"unexpected maxval {maxval}")
        data = np.frombuffer(fh.read(w * h * 2), dtype=">u2")
    if data.size != w * h:
        raise ValueError("truncated PGM payload")
    return data.reshape(h, w).astype(np.int64)

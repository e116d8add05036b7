"""Synthetic hyperspectral phantoms and the volume file format.

Volumes are built by mixing nonnegative spatial abundance maps with unimodal
emission-like spectra.  The spatial maps are seeded sums of Gaussian blobs
(the shipped substitute for licensed benchmark imagery); user-supplied maps
and volumes enter through the same file format.

Volume file layout: 8-byte magic ``SPFTIVOL``, three little-endian uint32
fields (version, n_xi, n_p_bar), then ``n_hs`` little-endian float64 voxels
in flat-index order.  A JSON sidecar with generator provenance is optional.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .core import Dims, HSVolume

__all__ = [
    "Spectrum",
    "SpatialMap",
    "make_spectrum",
    "blob_map",
    "assemble_volume",
    "default_phantom",
    "save_volume",
    "load_volume",
    "VolumeFormatError",
]

MAGIC = b"SPFTIVOL"
VERSION = 1

_KIND_WIDTHS = {
    # (left, right) support half-widths as fractions of the spectral axis
    "narrow": (0.03, 0.02),
    "medium": (0.035, 0.025),
    "broad": (0.05, 0.035),
}


class VolumeFormatError(ValueError):
    """Raised when a volume file is malformed; message carries the position."""


@dataclass(frozen=True)
class Spectrum:
    """A nonnegative emission curve with a single peak.

    ``peak_index`` is 1-based on the wavenumber axis.
    """

    values: np.ndarray
    peak_index: int
    peak_value: float


@dataclass(frozen=True)
class SpatialMap:
    """Nonnegative per-pixel abundance weights on the (y, x) grid."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weights must be a square 2D grid, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "weights", w)


def make_spectrum(kind: str, n_nu: int, peak_index: int, peak_value: float) -> Spectrum:
    """Unimodal spectrum peaking at ``peak_index`` with height ``peak_value``.

    The curve rises over a longer left flank than it falls on the right
    (fluorochrome-like asymmetry), is exactly zero outside a compact support,
    and attains its maximum only at the peak.
    """
    if kind not in _KIND_WIDTHS:
        raise ValueError(f"unknown spectrum kind {kind!r}; choose from {sorted(_KIND_WIDTHS)}")
    if not 1 <= peak_index <= n_nu:
        raise ValueError(f"peak_index out of range [1, {n_nu}]: {peak_index}")
    if peak_value < 0:
        raise ValueError(f"peak_value must be >= 0, got {peak_value}")
    left_frac, right_frac = _KIND_WIDTHS[kind]
    left = max(2, round(n_nu * left_frac))
    right = max(2, round(n_nu * right_frac))
    values = np.zeros(n_nu)
    idx = np.arange(1, n_nu + 1)
    on_left = (idx >= peak_index - left) & (idx < peak_index)
    on_right = (idx > peak_index) & (idx <= peak_index + right)
    t_left = (idx[on_left] - (peak_index - left)) / left
    t_right = (peak_index + right - idx[on_right]) / right
    values[on_left] = np.sin(0.5 * math.pi * t_left) ** 2
    values[on_right] = np.sin(0.5 * math.pi * t_right) ** 2
    values[peak_index - 1] = 1.0
    values *= peak_value
    return Spectrum(values=values, peak_index=peak_index, peak_value=float(peak_value))


def blob_map(n_p_bar: int, seed: int, n_blobs: int = 3) -> SpatialMap:
    """Seeded sum of Gaussian blobs, normalized to peak 1 (all-zero stays zero).

    Smooth blobs keep the spatial energy in coarse wavelet scales, which is
    the regime the variable-density sampling is designed for.
    """
    g = rng.generator(seed, rng.PHANTOM)
    yy, xx = np.mgrid[0:n_p_bar, 0:n_p_bar].astype(np.float64)
    w = np.zeros((n_p_bar, n_p_bar))
    for _ in range(n_blobs):
        cy, cx = g.uniform(0, n_p_bar, size=2)
        width = g.uniform(n_p_bar / 8.0, n_p_bar / 3.0)
        amp = g.uniform(0.4, 1.0)
        w += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * width**2))
    peak = w.max()
    if peak > 0:
        w /= peak
    return SpatialMap(weights=w)


def assemble_volume(maps: list[SpatialMap], spectra: list[Spectrum], dims: Dims) -> HSVolume:
    """Mix abundance maps with spectra: voxel = sum_i map_i(pixel) * spectrum_i(nu)."""
    if len(maps) != len(spectra):
        raise ValueError(f"got {len(maps)} maps but {len(spectra)} spectra")
    if not maps:
        raise ValueError("need at least one map/spectrum pair")
    cube = np.zeros((dims.n_xi, dims.n_p_bar, dims.n_p_bar))
    for sm, sp in zip(maps, spectra):
        if sm.weights.shape != (dims.n_p_bar, dims.n_p_bar):
            raise ValueError(
                f"map shape {sm.weights.shape} does not match grid ({dims.n_p_bar}, {dims.n_p_bar})"
            )
        if sp.values.shape != (dims.n_xi,):
            raise ValueError(
                f"spectrum length {sp.values.shape[0]} does not match n_xi={dims.n_xi}"
            )
        cube += sp.values[:, None, None] * sm.weights[None, :, :]
    return HSVolume.from_cube(dims, cube)


def default_phantom(dims: Dims, seed: int = 0) -> HSVolume:
    """Three-fluorochrome-style phantom: blob maps mixed with scaled spectra.

    Peak positions follow the 72/80/97-out-of-256 pattern, rescaled to the
    spectral axis length.
    """
    rel_peaks = (72 / 256, 80 / 256, 97 / 256)
    kinds = ("narrow", "medium", "broad")
    spectra = [
        make_spectrum(kind, dims.n_xi, max(1, min(dims.n_xi, round(dims.n_xi * rel))), 100.0)
        for kind, rel in zip(kinds, rel_peaks)
    ]
    maps = [blob_map(dims.n_p_bar, rng.derive_seed(seed, rng.PHANTOM, i)) for i in range(3)]
    return assemble_volume(maps, spectra, dims)


def save_volume(vol: HSVolume, path, sidecar: dict | None = None) -> None:
    """Write a volume in the documented binary format (bit-exact round trip)."""
    path = Path(path)
    header = MAGIC + struct.pack("<III", VERSION, vol.dims.n_xi, vol.dims.n_p_bar)
    path.write_bytes(header + vol.data.astype("<f8").tobytes())
    if sidecar is not None:
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar), encoding="ascii")


def load_volume(path) -> HSVolume:
    """Read a volume file; malformed input raises :class:`VolumeFormatError`."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 12:
        raise VolumeFormatError(f"file too short for header: {len(raw)} bytes")
    if raw[: len(MAGIC)] != MAGIC:
        raise VolumeFormatError(f"bad magic at offset 0: {raw[:len(MAGIC)]!r}")
    version, n_xi, n_p_bar = struct.unpack_from("<III", raw, len(MAGIC))
    if version != VERSION:
        raise VolumeFormatError(f"unsupported version {version} at offset {len(MAGIC)}")
    try:
        dims = Dims(n_xi, n_p_bar)
    except ValueError as exc:
        raise VolumeFormatError(f"bad dims in header: {exc}") from exc
    payload = raw[len(MAGIC) + 12 :]
    expected = 8 * dims.n_hs
    if len(payload) != expected:
        raise VolumeFormatError(
            f"payload has {len(payload)} bytes at offset {len(MAGIC) + 12}, expected {expected}"
        )
    data = np.frombuffer(payload, dtype="<f8").copy()
    return HSVolume(dims, data)

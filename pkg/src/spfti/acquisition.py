"""Nyquist and compressive acquisition simulation, binary masks, exposure accounting.

Measurements are stored complex: the sensing map has complex rows, and noise
of standard deviation ``sigma_nyq`` is added independently to the real and
imaginary parts.  Duplicate indices in a sampling multiset receive
independent noise draws, mirroring repeated physical acquisitions.  Noise
seeding is separate from sampling-plan seeding so noise Monte-Carlo can vary
while the index multiset is held fixed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import rng
from .coherence import SamplingPlan
from .core import Dims, HSVolume, unflatten_index
from .transforms import paley_hadamard, sensing_map

__all__ = [
    "MeasurementSet",
    "ExposureReport",
    "nyquist_acquire",
    "compressive_acquire",
    "binary_pattern",
    "binary_acquire",
    "allon_reference",
    "demix_binary",
    "light_exposure",
    "save_measurements",
    "load_measurements",
]


@dataclass
class MeasurementSet:
    """Acquired measurements with their index multiset and noise level.

    ``omega`` holds the 1-based flat index of each measurement; its length
    equals ``len(y)``.  ``meta`` carries free-form provenance (pmf variant,
    ratios, ...) that serialization preserves.
    """

    y: np.ndarray
    omega: np.ndarray
    sigma_nyq: float
    dims: Dims
    seed: int
    meta: dict | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.complex128)
        self.omega = np.asarray(self.omega, dtype=np.int64)
        if self.y.shape != self.omega.shape or self.y.ndim != 1:
            raise ValueError("y and omega must be 1D arrays of equal length")
        if self.sigma_nyq < 0:
            raise ValueError(f"sigma_nyq must be >= 0, got {self.sigma_nyq}")
        if self.omega.size and (self.omega.min() < 1 or self.omega.max() > self.dims.n_hs):
            raise ValueError("omega contains out-of-range flat indices")

    @property
    def m(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class ExposureReport:
    """Illumination dose of a compressive scan relative to a full scan."""

    compressive_units: float
    nyquist_units: float
    ratio: float


def _complex_noise(m: int, sigma: float, seed: int) -> np.ndarray:
    if sigma == 0.0 or m == 0:
        return np.zeros(m, dtype=np.complex128)
    g = rng.generator(seed, rng.NOISE)
    re_im = g.normal(0.0, sigma, size=(2, m))
    return re_im[0] + 1j * re_im[1]


def nyquist_acquire(x: HSVolume, sigma: float, seed: int = 0) -> MeasurementSet:
    """Full acquisition: every flat index measured once, in order."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    full = sensing_map(x.dims).forward(x.data)
    y = full + _complex_noise(x.dims.n_hs, sigma, seed)
    omega = np.arange(1, x.dims.n_hs + 1, dtype=np.int64)
    return MeasurementSet(y=y, omega=omega, sigma_nyq=float(sigma), dims=x.dims, seed=int(seed))


def compressive_acquire(
    x: HSVolume, plan: SamplingPlan, sigma: float, seed: int = 0
) -> MeasurementSet:
    """Acquire the plan's index multiset; duplicates get independent noise."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if plan.pmf.size != x.dims.n_hs:
        raise ValueError(
            f"plan is for {plan.pmf.size} flat indices but volume has {x.dims.n_hs}"
        )
    full = sensing_map(x.dims).forward(x.data)
    y = full[plan.omega - 1] + _complex_noise(plan.m, sigma, seed)
    return MeasurementSet(
        y=y, omega=plan.omega.copy(), sigma_nyq=float(sigma), dims=x.dims, seed=int(seed)
    )


def binary_pattern(l_p: int, n_p_bar: int) -> np.ndarray:
    """The 0/1 coded-aperture mask of spatial pattern ``l_p`` as an (y, x) grid.

    Pattern 1 is the all-on mask; every other pattern switches on exactly
    half of the pixels.
    """
    n_p = n_p_bar * n_p_bar
    if not 1 <= l_p <= n_p:
        raise ValueError(f"l_p out of range [1, {n_p}]: {l_p}")
    had = paley_hadamard(n_p)
    e = np.zeros(n_p)
    e[l_p - 1] = 1.0
    column = had.forward(e)  # symmetric map: forward of a basis vector is the column
    mask = np.rint((math.sqrt(n_p) * column + 1.0) / 2.0).astype(np.int64)
    return mask.reshape(n_p_bar, n_p_bar)


def _spatial_coefficients(x: HSVolume) -> np.ndarray:
    """(n_xi, n_p) array of per-OPD spectra, OPD-frequency analyzed once."""
    from .transforms import centered_dft

    cube = x.data.reshape(x.dims.n_xi, x.dims.n_p)
    return centered_dft(x.dims.n_xi).kernel(cube.T, False).T  # analyze along the wavenumber axis


def binary_acquire(x: HSVolume, omega: np.ndarray, sigma: float = 0.0, seed: int = 0) -> np.ndarray:
    """Simulate single-pixel readings through 0/1 masks for each flat index.

    Returns the raw binary-mask measurements (complex, one per entry of
    ``omega``); combine with :func:`allon_reference` and
    :func:`demix_binary` to recover signed-pattern measurements.
    """
    omega = np.asarray(omega, dtype=np.int64)
    spec = _spatial_coefficients(x)
    n_p = x.dims.n_p
    out = np.empty(omega.size, dtype=np.complex128)
    masks: dict[int, np.ndarray] = {}
    for j, l in enumerate(omega):
        l_xi, l_x, l_y = unflatten_index(int(l), x.dims)
        l_p = x.dims.n_p_bar * (l_y - 1) + l_x
        if l_p not in masks:
            masks[l_p] = binary_pattern(l_p, x.dims.n_p_bar).reshape(n_p).astype(np.float64)
        out[j] = spec[l_xi - 1] @ masks[l_p]
    return out + _complex_noise(omega.size, sigma, seed)


def allon_reference(x: HSVolume, l_xi_list, sigma: float = 0.0, seed: int = 0) -> dict[int, complex]:
    """All-on-mask measurement per requested OPD sample (keyed by ``l_xi``)."""
    spec = _spatial_coefficients(x)
    noise = _complex_noise(len(l_xi_list), sigma, seed)
    out: dict[int, complex] = {}
    for j, l_xi in enumerate(l_xi_list):
        if not 1 <= l_xi <= x.dims.n_xi:
            raise ValueError(f"l_xi out of range [1, {x.dims.n_xi}]: {l_xi}")
        out[int(l_xi)] = complex(spec[l_xi - 1].sum() + noise[j])
    return out


def demix_binary(
    y_bin: np.ndarray, omega: np.ndarray, allon: Mapping[int, complex], dims: Dims
) -> np.ndarray:
    """Convert binary-mask measurements to signed-pattern measurements.

    Uses ``y = (2 * y_bin - allon[l_xi]) / sqrt(n_p)``; in the noiseless case
    the result equals a signed compressive acquisition of the same multiset.

    Raises
    ------
    ValueError
        If an OPD sample appearing in ``omega`` has no all-on reference.
    """
    y_bin = np.asarray(y_bin, dtype=np.complex128)
    omega = np.asarray(omega, dtype=np.int64)
    if y_bin.shape != omega.shape:
        raise ValueError("y_bin and omega must have equal length")
    out = np.empty_like(y_bin)
    scale = 1.0 / math.sqrt(dims.n_p)
    for j, l in enumerate(omega):
        l_xi = unflatten_index(int(l), dims).l_xi
        if l_xi not in allon:
            raise ValueError(f"missing all-on reference for OPD sample {l_xi}")
        out[j] = (2.0 * y_bin[j] - allon[l_xi]) * scale
    return out


def light_exposure(m: float, dims: Dims) -> ExposureReport:
    """Illumination dose of an ``m``-measurement scan versus a full scan.

    ``m`` may be fractional (useful for exact ratio accounting); it must lie
    in ``[0, n_hs]``.
    """
    if not 0 <= m <= dims.n_hs:
        raise ValueError(f"m out of range [0, {dims.n_hs}]: {m}")
    compressive = (m + dims.n_xi) * dims.n_p
    nyquist = (dims.n_hs + dims.n_xi) * dims.n_p
    return ExposureReport(
        compressive_units=float(compressive),
        nyquist_units=float(nyquist),
        ratio=float((m + dims.n_xi) / (dims.n_hs + dims.n_xi)),
    )


# ---------------------------------------------------------------------------
# Serialization: flat little-endian binary + JSON sidecar
# ---------------------------------------------------------------------------


def save_measurements(ms: MeasurementSet, path) -> None:
    """Write measurements as interleaved re/im float64 (little-endian) plus
    a ``.json`` sidecar holding dims, the index multiset, seed and sigma."""
    path = Path(path)
    interleaved = np.empty(2 * ms.m, dtype="<f8")
    interleaved[0::2] = ms.y.real
    interleaved[1::2] = ms.y.imag
    path.write_bytes(interleaved.tobytes())
    sidecar = {
        "n_xi": ms.dims.n_xi,
        "n_p_bar": ms.dims.n_p_bar,
        "omega": ms.omega.tolist(),
        "seed": ms.seed,
        "sigma_nyq": ms.sigma_nyq,
        "meta": ms.meta or {},
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar), encoding="ascii")


def load_measurements(path) -> MeasurementSet:
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if not sidecar_path.exists():
        raise ValueError(f"missing sidecar {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text(encoding="ascii"))
    dims = Dims(sidecar["n_xi"], sidecar["n_p_bar"])
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    omega = np.asarray(sidecar["omega"], dtype=np.int64)
    if raw.size != 2 * omega.size:
        raise ValueError(
            f"payload has {raw.size} floats, expected {2 * omega.size} for {omega.size} measurements"
        )
    y = raw[0::2] + 1j * raw[1::2]
    return MeasurementSet(
        y=y,
        omega=omega,
        sigma_nyq=float(sidecar["sigma_nyq"]),
        dims=dims,
        seed=int(sidecar["seed"]),
        meta=sidecar.get("meta") or None,
    )

"""Local-coherence bounds, variable-density sampling pmfs, and index sampling.

The closed-form bounds factor over the two Kronecker axes: an OPD-frequency
factor that decays like ``|l_xi - n_xi/2|^(-1/2)`` away from the zero-OPD row
and a spatial factor that decays dyadically with ``max(l_x, l_y)``.  Two full
bounds are implemented:

* ``single_cap`` -- ``sqrt(2) * min(1, spatial * opd)`` with one outer cap;
* ``product`` -- the per-factor capped product, never larger than ``single_cap``.

A blocked brute-force evaluation of the true local coherence is provided as
the oracle; the spatial factor is met with equality, the OPD factor is a
strict upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .core import Dims, unflatten_index
from .transforms import LinearMap, compose_map, sensing_map, sparsity_map

__all__ = [
    "CoherenceProfile",
    "SamplingPlan",
    "kappa_xi",
    "kappa_p",
    "kappa_full",
    "coherence_profile",
    "brute_force_local_coherence",
    "local_coherence_of",
    "build_pmf",
    "uniform_pmf",
    "sample_omega",
    "sample_complexity",
    "profile_to_csv",
]

BRUTE_FORCE_CAP = 1 << 14

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class CoherenceProfile:
    """Per-row coherence values (or bounds) over the flat acquisition index.

    ``kappa[l - 1]`` is the value at flat index ``l``.  ``variant`` records
    provenance: a closed-form bound ("single_cap" or "product") or the exact
    brute-force row maxima ("brute").
    """

    kappa: np.ndarray
    variant: str

    @property
    def kappa_sq_norm(self) -> float:
        return float(np.dot(self.kappa, self.kappa))


@dataclass(frozen=True)
class SamplingPlan:
    """An i.i.d. index multiset with its pmf and inverse-root-probability weights.

    ``omega`` holds 1-based flat indices, with repetitions kept;
    ``weights[j] == 1 / sqrt(pmf[omega[j] - 1])`` exactly.
    """

    pmf: np.ndarray
    omega: np.ndarray
    weights: np.ndarray
    seed: int
    m: int

    def __post_init__(self):
        if len(self.omega) != self.m or len(self.weights) != self.m:
            raise ValueError("omega/weights length must equal m")


def _validate_range(value: int, upper: int, what: str) -> None:
    if not 1 <= value <= upper:
        raise ValueError(f"{what} out of range [1, {upper}]: {value}")


def kappa_xi(l_xi: int, n_xi: int) -> float:
    """OPD-frequency coherence bound; capped at sqrt(2) on the zero-OPD row."""
    _validate_range(l_xi, n_xi, "l_xi")
    d = abs(l_xi - n_xi // 2)
    if d == 0:
        return _SQRT2
    return _SQRT2 * min(1.0, 1.0 / math.sqrt(d))


def kappa_p(l_x: int, l_y: int, n_p_bar: int | None = None) -> float:
    """Spatial-frequency coherence bound (exact for the Hadamard factor).

    The degenerate corner ``max(l_x, l_y) == 1`` evaluates to 1, matching the
    all-on pattern row.
    """
    if n_p_bar is not None:
        _validate_range(l_x, n_p_bar, "l_x")
        _validate_range(l_y, n_p_bar, "l_y")
    elif l_x < 1 or l_y < 1:
        raise ValueError(f"spatial indices must be >= 1, got ({l_x}, {l_y})")
    mx = max(l_x, l_y)
    if mx == 1:
        return 1.0
    return min(1.0, 2.0 ** (-math.floor(math.log2(mx - 1))))


def kappa_full(l_xi: int, l_x: int, l_y: int, dims: Dims, variant: str = "single_cap") -> float:
    """Full 3D coherence bound at a (1-based) 3D index.

    ``single_cap`` applies one cap to the product of the raw decay factors
    (treating a vanishing denominator as +inf, so the cap wins);
    ``product`` multiplies the individually capped factors and is the
    tighter of the two.
    """
    _validate_range(l_xi, dims.n_xi, "l_xi")
    _validate_range(l_x, dims.n_p_bar, "l_x")
    _validate_range(l_y, dims.n_p_bar, "l_y")
    if variant == "product":
        return kappa_xi(l_xi, dims.n_xi) * kappa_p(l_x, l_y)
    if variant != "single_cap":
        raise ValueError(f"unknown kappa variant: {variant!r}")
    mx = max(l_x, l_y)
    spatial = math.inf if mx == 1 else 2.0 ** (-math.floor(math.log2(mx - 1)))
    d = abs(l_xi - dims.n_xi // 2)
    opd = math.inf if d == 0 else 1.0 / math.sqrt(d)
    return _SQRT2 * min(1.0, spatial * opd)


def _spatial_decay_grid(n_p_bar: int) -> np.ndarray:
    """Uncapped spatial decay factor on the (l_y, l_x) grid; +inf at the corner."""
    ax = np.arange(1, n_p_bar + 1)
    mx = np.maximum(ax[:, None], ax[None, :]).astype(np.float64)
    grid = np.full_like(mx, np.inf)
    nz = mx > 1
    grid[nz] = 2.0 ** (-np.floor(np.log2(mx[nz] - 1)))
    return grid


def _opd_decay(n_xi: int) -> np.ndarray:
    """Uncapped OPD decay factor per l_xi; +inf on the zero-frequency row."""
    d = np.abs(np.arange(1, n_xi + 1) - n_xi // 2).astype(np.float64)
    out = np.full(n_xi, np.inf)
    nz = d > 0
    out[nz] = 1.0 / np.sqrt(d[nz])
    return out


def coherence_profile(dims: Dims, variant: str = "single_cap") -> CoherenceProfile:
    """Closed-form coherence bound over all flat indices (vectorized)."""
    spatial = _spatial_decay_grid(dims.n_p_bar)
    opd = _opd_decay(dims.n_xi)
    if variant == "single_cap":
        full = _SQRT2 * np.minimum(1.0, opd[:, None, None] * spatial[None, :, :])
    elif variant == "product":
        kxi = _SQRT2 * np.minimum(1.0, opd)
        kp = np.minimum(1.0, spatial)
        full = kxi[:, None, None] * kp[None, :, :]
    else:
        raise ValueError(f"unknown kappa variant: {variant!r}")
    return CoherenceProfile(full.reshape(dims.n_hs), variant)


def local_coherence_of(m: LinearMap, cap: int = BRUTE_FORCE_CAP, block: int = 256) -> np.ndarray:
    """Exact row-wise max-modulus of a map's dense matrix, computed in column blocks."""
    if m.rows > cap:
        raise ValueError(f"brute-force coherence: {m.rows} rows exceeds cap {cap}")
    dt = np.complex128 if m.field == "complex" else np.float64
    mu = np.zeros(m.rows)
    for start in range(0, m.cols, block):
        width = min(block, m.cols - start)
        basis = np.zeros((width, m.cols), dtype=dt)
        basis[np.arange(width), start + np.arange(width)] = 1.0
        cols = m.kernel(basis, False)  # row j holds column (start + j)
        np.maximum(mu, np.abs(cols).max(axis=0), out=mu)
    return mu


def brute_force_local_coherence(dims: Dims, cap: int = BRUTE_FORCE_CAP) -> CoherenceProfile:
    """Exact local coherence of the sensing/sparsity pair at ``dims``."""
    if dims.n_hs > cap:
        raise ValueError(f"brute-force coherence: n_hs={dims.n_hs} exceeds cap {cap}")
    g = compose_map(sensing_map(dims), sparsity_map(dims))
    return CoherenceProfile(local_coherence_of(g, cap=cap), "brute")


def build_pmf(dims: Dims, variant: str = "kappa_sq", kappa_variant: str = "single_cap") -> np.ndarray:
    """Sampling pmf over flat indices.

    ``kappa_sq`` normalizes the squared closed-form bound; ``reciprocal`` uses the
    smoother reciprocal form ``min(1, 1/(|l_xi - n_xi/2| * max(l_x, l_y)))``
    and normalizes numerically.  Both variants are strictly positive and sum
    to one.
    """
    if variant == "kappa_sq":
        kappa = coherence_profile(dims, kappa_variant).kappa
        raw = kappa * kappa
    elif variant == "reciprocal":
        ax = np.arange(1, dims.n_p_bar + 1)
        mx = np.maximum(ax[:, None], ax[None, :]).astype(np.float64)
        d = np.abs(np.arange(1, dims.n_xi + 1) - dims.n_xi // 2).astype(np.float64)
        opd = np.full(dims.n_xi, np.inf)
        opd[d > 0] = 1.0 / d[d > 0]
        raw = np.minimum(1.0, opd[:, None, None] / mx[None, :, :]).reshape(dims.n_hs)
    else:
        raise ValueError(f"unknown pmf variant: {variant!r}")
    pmf = raw / raw.sum()
    return pmf


def uniform_pmf(dims: Dims) -> np.ndarray:
    return np.full(dims.n_hs, 1.0 / dims.n_hs)


def validate_pmf(pmf: np.ndarray) -> np.ndarray:
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.ndim != 1 or pmf.size == 0:
        raise ValueError("pmf must be a non-empty 1D vector")
    if np.any(pmf < 0):
        raise ValueError("pmf has negative entries")
    if abs(pmf.sum() - 1.0) > 1e-9:
        raise ValueError(f"pmf is not normalized: sum = {pmf.sum()!r}")
    return pmf


def sample_omega(pmf: np.ndarray, m: int, seed: int) -> SamplingPlan:
    """Draw ``m`` i.i.d. flat indices (with replacement) from ``pmf``.

    Duplicates are kept: the result is a multiset.  Draws use inverse-CDF
    lookup on Philox uniforms, so the plan is bit-reproducible per seed.
    """
    pmf = validate_pmf(pmf)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    cdf = np.cumsum(pmf)
    u = rng.generator(seed, rng.SAMPLING).random(m)
    idx0 = np.searchsorted(cdf, u, side="right")
    idx0 = np.minimum(idx0, pmf.size - 1)
    omega = (idx0 + 1).astype(np.int64)
    weights = 1.0 / np.sqrt(pmf[idx0])
    return SamplingPlan(pmf=pmf, omega=omega, weights=weights, seed=int(seed), m=int(m))


def sample_complexity(
    k: int, epsilon_fail: float, dims: Dims, c: float = 1.0, kappa_variant: str = "single_cap"
) -> int:
    """Advisory measurement count ``ceil(c * ||kappa||^2 * k * log(1/eps))``.

    The proportionality constant is not pinned down by theory; ``c`` defaults
    to 1 and should be treated as a knob, not a guarantee.
    """
    if k < 1:
        raise ValueError(f"sparsity k must be >= 1, got {k}")
    if not 0 < epsilon_fail <= 1:
        raise ValueError(f"failure probability must be in (0, 1], got {epsilon_fail}")
    ksq = coherence_profile(dims, kappa_variant).kappa_sq_norm
    return int(math.ceil(c * ksq * k * math.log(1.0 / epsilon_fail)))


def profile_to_csv(values: np.ndarray, dims: Dims, path) -> None:
    """Write per-flat-index values as CSV rows (l, l_xi, l_x, l_y, value)."""
    values = np.asarray(values)
    if values.shape != (dims.n_hs,):
        raise ValueError(f"expected {dims.n_hs} values, got shape {values.shape}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("flat_index,l_xi,l_x,l_y,value\n")
        for l in range(1, dims.n_hs + 1):
            l_xi, l_x, l_y = unflatten_index(l, dims)
            fh.write(f"{l},{l_xi},{l_x},{l_y},{float(values[l - 1])!r}\n")

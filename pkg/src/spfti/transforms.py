"""Matrix-free orthonormal transforms and their Kronecker compositions.

The package works with four named bases and two Kronecker products of them:

* ``centered_dft`` -- unitary DFT with the zero-frequency row placed at
  (1-based) row ``n // 2``, so row ``l`` carries frequency ``l - n // 2``.
  ``forward`` is the analysis direction (signal -> spectrum).
* ``paley_hadamard`` -- Hadamard basis in Paley dyadic order.  The matrix is
  real, symmetric and involutive, so forward and adjoint coincide.
* ``haar1d`` -- 1D discrete Haar wavelet basis.  ``forward`` is synthesis
  (coefficients -> signal); ``adjoint`` is the analysis transform.
* ``haar2d_isotropic`` -- 2D isotropic Haar wavelet basis on a square pixel
  grid, flattened row-major (y slow, x fast).  Coefficient layout: index 1 is
  the global scaling coefficient, and dyadic level ``m = 1, 2, 4, ...`` holds
  three ``m*m`` detail blocks (horizontal-, vertical-, diagonal-oriented) at
  flat positions ``(m^2, 4 m^2]``.
* ``sensing_map`` / ``sparsity_map`` -- Kronecker products of the above with
  the OPD/wavenumber factor on the slow axis, matching the flat-index rule of
  :mod:`spfti.core`.

``haar1d_scaling`` is the non-orthonormal stack of per-level scaling
functions used only inside the 2D wavelet assembly; it is exposed for
oracle-style testing and must not be treated as a basis.

All maps are pure: no shared mutable state, safe for concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .core import Dims, is_power_of_two

__all__ = [
    "LinearMap",
    "DENSIFY_CAP",
    "identity_map",
    "centered_dft",
    "paley_hadamard",
    "haar1d",
    "haar1d_scaling",
    "haar2d_isotropic",
    "kron_map",
    "compose_map",
    "densify",
    "dense_to_csv",
    "sensing_map",
    "sparsity_map",
]

DENSIFY_CAP = 1 << 20

_INV_SQRT2 = 1.0 / math.sqrt(2.0)

# below this size, real orthonormal factors apply via cached dense matmul
# (BLAS is several times faster than strided butterflies on these shapes)
_DENSE_FAST_MAX = 1024


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _require_pow2(n: int, what: str = "length") -> None:
    if not is_power_of_two(n):
        raise ValueError(f"{what} must be a power of two, got {n}")


@dataclass(frozen=True)
class LinearMap:
    """A matrix-free linear operator with an exact conjugate-transpose.

    ``kernel(arr, adjoint)`` applies the operator (or its adjoint) along the
    last axis of an ND array; batching over leading axes is what makes the
    Kronecker compositions fast.  ``forward``/``adjoint`` are the public,
    vector-only entry points.
    """

    rows: int
    cols: int
    field: str  # "real" or "complex"
    name: str
    kernel: Callable[[np.ndarray, bool], np.ndarray] = field(repr=False)

    def forward(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u)
        if u.shape != (self.cols,):
            raise ValueError(f"{self.name}: expected length-{self.cols} vector, got shape {u.shape}")
        return self.kernel(u, False)

    def adjoint(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u)
        if u.shape != (self.rows,):
            raise ValueError(f"{self.name}: expected length-{self.rows} vector, got shape {u.shape}")
        return self.kernel(u, True)


def _work_dtype(a: np.ndarray) -> np.dtype:
    return np.result_type(a.dtype, np.float64)


def _matmul_mats(builder, n: int) -> tuple[np.ndarray, ...]:
    """(fwd, adj, fwd_complex, adj_complex) matrices M such that ``a @ M``
    applies the forward (resp. adjoint) map along the last axis."""
    fwd = np.ascontiguousarray(builder(np.eye(n)))  # row j holds map(e_j)
    adj = np.ascontiguousarray(fwd.T)
    return (
        _freeze(fwd),
        _freeze(adj),
        _freeze(fwd.astype(np.complex128)),
        _freeze(adj.astype(np.complex128)),
    )


def _pick_mat(mats: tuple[np.ndarray, ...], a: np.ndarray, adjoint: bool) -> np.ndarray:
    return mats[(2 if np.iscomplexobj(a) else 0) + (1 if adjoint else 0)]


def identity_map(n: int) -> LinearMap:
    def kernel(a: np.ndarray, adjoint: bool) -> np.ndarray:
        return np.array(a, dtype=_work_dtype(a), copy=True)

    return LinearMap(n, n, "real", f"identity({n})", kernel)


# ---------------------------------------------------------------------------
# Centered unitary DFT
# ---------------------------------------------------------------------------


def centered_dft(n: int) -> LinearMap:
    """Unitary DFT map with zero frequency at 1-based row ``n // 2``.

    ``forward`` computes spectrum coefficients: row ``l`` (1-based) holds the
    component at frequency ``l - n // 2``.  ``adjoint`` is the inverse.
    """
    _require_pow2(n)
    shift = n // 2 - 1
    scale = 1.0 / math.sqrt(n)

    def kernel(a: np.ndarray, adjoint: bool) -> np.ndarray:
        if adjoint:
            return np.fft.ifft(np.roll(a, -shift, axis=-1), axis=-1) * math.sqrt(n)
        return np.roll(np.fft.fft(a, axis=-1), shift, axis=-1) * scale

    return LinearMap(n, n, "complex", f"centered_dft({n})", kernel)


# ---------------------------------------------------------------------------
# Paley-ordered Hadamard
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    k = n.bit_length() - 1
    idx = np.arange(n, dtype=np.int64)
    rev = np.zeros_like(idx)
    for b in range(k):
        rev |= ((idx >> b) & 1) << (k - 1 - b)
    rev.setflags(write=False)
    return rev


def _fwht_natural(a: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard butterflies along the last axis."""
    out = np.array(a, dtype=_work_dtype(a), copy=True)
    shape = out.shape
    n = shape[-1]
    h = 1
    while h < n:
        out = out.reshape(shape[:-1] + (n // (2 * h), 2, h))
        top = out[..., 0, :] + out[..., 1, :]
        bot = out[..., 0, :] - out[..., 1, :]
        out[..., 0, :] = top
        out[..., 1, :] = bot
        out = out.reshape(shape)
        h *= 2
    return out


@lru_cache(maxsize=None)
def _hadamard_mats(n: int) -> tuple[np.ndarray, ...]:
    perm = _bit_reversal(n)
    scale = 1.0 / math.sqrt(n)
    return _matmul_mats(lambda eye: _fwht_natural(eye[..., perm]) * scale, n)


def paley_hadamard(n: int) -> LinearMap:
    """Orthonormal Hadamard map in Paley order (symmetric, self-adjoint).

    Every entry of the dense matrix is exactly ``+-1/sqrt(n)``.  The Paley
    column order equals the natural (Sylvester) order with bit-reversed
    indices, which is how the fast path is implemented.
    """
    _require_pow2(n)
    perm = _bit_reversal(n)
    scale = 1.0 / math.sqrt(n)

    def kernel(a: np.ndarray, adjoint: bool) -> np.ndarray:
        a = np.asarray(a)
        if n <= _DENSE_FAST_MAX:
            return a @ _pick_mat(_hadamard_mats(n), a, adjoint)
        return _fwht_natural(a[..., perm]) * scale

    return LinearMap(n, n, "real", f"paley_hadamard({n})", kernel)


# ---------------------------------------------------------------------------
# Haar wavelets
# ---------------------------------------------------------------------------


def _haar1d_synthesis(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    dt = _work_dtype(a)
    cur = np.array(a[..., :1], dtype=dt)
    m = 1
    while m < n:
        det = a[..., m : 2 * m]
        lo = (cur + det) * _INV_SQRT2
        hi = (cur - det) * _INV_SQRT2
        cur = np.empty(a.shape[:-1] + (2 * m,), dtype=dt)
        cur[..., 0::2] = lo
        cur[..., 1::2] = hi
        m *= 2
    return cur


def _haar1d_analysis(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    dt = _work_dtype(a)
    out = np.empty(a.shape, dtype=dt)
    cur = np.asarray(a, dtype=dt)
    m = n
    while m > 1:
        even = cur[..., 0::2]
        odd = cur[..., 1::2]
        out[..., m // 2 : m] = (even - odd) * _INV_SQRT2
        cur = (even + odd) * _INV_SQRT2
        m //= 2
    out[..., 0] = cur[..., 0]
    return out


@lru_cache(maxsize=None)
def _haar1d_mats(n: int) -> tuple[np.ndarray, ...]:
    return _matmul_mats(_haar1d_synthesis, n)


def haar1d(n: int) -> LinearMap:
    """1D discrete Haar wavelet basis; ``forward`` synthesizes, ``adjoint`` analyzes.

    Coefficient order: global scaling first, then detail levels coarse to
    fine, so level ``m`` occupies 0-based slots ``[m, 2m)``.  Both directions
    run in O(n).
    """
    _require_pow2(n)

    def kernel(a: np.ndarray, adjoint: bool) -> np.ndarray:
        a = np.asarray(a)
        if n <= _DENSE_FAST_MAX:
            return a @ _pick_mat(_haar1d_mats(n), a, adjoint)
        return _haar1d_analysis(a) if adjoint else _haar1d_synthesis(a)

    return LinearMap(n, n, "real", f"haar1d({n})", kernel)


def _haar0_synthesis(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    dt = _work_dtype(a)
    cur = np.array(a[..., :1], dtype=dt)
    m = 1
    while m < n:
        val = (cur + a[..., m : 2 * m]) * _INV_SQRT2
        cur = np.empty(a.shape[:-1] + (2 * m,), dtype=dt)
        cur[..., 0::2] = val
        cur[..., 1::2] = val
        m *= 2
    return cur


def _haar0_analysis(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    dt = _work_dtype(a)
    out = np.empty(a.shape, dtype=dt)
    cur = np.asarray(a, dtype=dt)
    m = n
    while m > 1:
        cur = (cur[..., 0::2] + cur[..., 1::2]) * _INV_SQRT2
        out[..., m // 2 : m] = cur
        m //= 2
    out[..., 0] = cur[..., 0]
    return out


def haar1d_scaling(n: int) -> LinearMap:
    """Stack of per-level Haar scaling functions (NOT orthonormal).

    Column ``j`` is the all-positive scaling function on the support of the
    Haar wavelet with the same index, normalized to unit 2-norm.  The matrix
    is rank-deficient; it exists only to assemble the mixed-orientation
    blocks of the 2D isotropic basis and for oracle tests.
    """
    _require_pow2(n)

    def kernel(a: np.ndarray, adjoint: bool) -> np.ndarray:
        a = np.asarray(a)
        return _haar0_analysis(a) if adjoint else _haar0_synthesis(a)

    return LinearMap(n, n, "real", f"haar1d_scaling({n})", kernel)


def _haar2d_synthesis(a: np.ndarray, nb: int) -> np.ndarray:
    dt = _work_dtype(a)
    lead = a.shape[:-1]
    cur = np.array(a[..., :1], dtype=dt).reshape(lead + (1, 1))
    m = 1
    while m < nb:
        base = m * m
        blk = a[..., base : 4 * base]
        d1 = blk[..., :base].reshape(lead + (m, m))
        d2 = blk[..., base : 2 * base].reshape(lead + (m, m))
        d3 = blk[..., 2 * base : 3 * base].reshape(lead + (m, m))
        nxt = np.empty(lead + (2 * m, 2 * m), dtype=dt)
        nxt[..., 0::2, 0::2] = (cur + d1 + d2 + d3) * 0.5
        nxt[..., 0::2, 1::2] = (cur - d1 + d2 - d3) * 0.5
        nxt[..., 1::2, 0::2] = (cur + d1 - d2 - d3) * 0.5
        nxt[..., 1::2, 1::2] = (cur - d1 - d2 + d3) * 0.5
        cur = nxt
        m *= 2
    return cur.reshape(lead + (nb * nb,))


def _haar2d_analysis(a: np.ndarray, nb: int) -> np.ndarray:
    dt = _work_dtype(a)
    lead = a.shape[:-1]
    out = np.empty(a.shape, dtype=dt)
    cur = np.asarray(a, dtype=dt).reshape(lead + (nb, nb))
    m = nb
    while m > 1:
        m //= 2
        tl = cur[..., 0::2, 0::2]
        tr = cur[..., 0::2, 1::2]
        bl = cur[..., 1::2, 0::2]
        br = cur[..., 1::2, 1::2]
        base = m * m
        out[..., base : 2 * base] = ((tl - tr + bl - br) * 0.5).reshape(lead + (base,))
        out[..., 2 * base : 3 * base] = ((tl + tr - bl - br) * 0.5).reshape(lead + (base,))
        out[..., 3 * base : 4 * base] = ((tl - tr - bl + br) * 0.5).reshape(lead + (base,))
        cur = (tl + tr + bl + br) * 0.5
    out[..., 0] = cur[..., 0, 0]
    return out


@lru_cache(maxsize=None)
def _haar2d_mats(n_p: int) -> tuple[np.ndarray, ...]:
    nb = math.isqrt(n_p)
    return _matmul_mats(lambda eye: _haar2d_synthesis(eye, nb), n_p)


def haar2d_isotropic(n_p: int) -> LinearMap:
    """2D isotropic Haar wavelet basis on ``sqrt(n_p) x sqrt(n_p)`` pixels.

    The pixel axis is flattened row-major (y slow, x fast).  ``forward``
    synthesizes an image from coefficients, ``adjoint`` analyzes.  Column
    blocks are ordered: global scaling, then per dyadic level the horizontal
    (x-wavelet), vertical (y-wavelet) and diagonal detail blocks, each
    flattened y-slow.
    """
    nb = math.isqrt(n_p)
    if nb * nb != n_p:
        raise ValueError(f"n_p must be a perfect square, got {n_p}")
    _require_pow2(nb, "grid side")

    def kernel(a: np.ndarray, adjoint: bool) -> np.ndarray:
        a = np.asarray(a)
        if n_p <= _DENSE_FAST_MAX:
            return a @ _pick_mat(_haar2d_mats(n_p), a, adjoint)
        return _haar2d_analysis(a, nb) if adjoint else _haar2d_synthesis(a, nb)

    return LinearMap(n_p, n_p, "real", f"haar2d_isotropic({n_p})", kernel)


# ---------------------------------------------------------------------------
# Compositions
# ---------------------------------------------------------------------------


def kron_map(a: LinearMap, b: LinearMap, name: str | None = None) -> LinearMap:
    """Kronecker product ``A (x) B`` applied without materialization.

    Flattened vectors carry the ``B`` index on the fast (last-varying) axis:
    the input is reshaped to an ``(a.cols, b.cols)`` array, ``B`` acts along
    rows and ``A`` along columns.
    """
    fld = "complex" if "complex" in (a.field, b.field) else "real"
    nm = name or f"kron({a.name}, {b.name})"

    def kernel(u: np.ndarray, adjoint: bool) -> np.ndarray:
        u = np.asarray(u)
        na, nb_ = (a.rows, b.rows) if adjoint else (a.cols, b.cols)
        if u.shape[-1] != na * nb_:
            raise ValueError(f"{nm}: expected last axis {na * nb_}, got {u.shape[-1]}")
        lead = u.shape[:-1]
        mat = u.reshape(lead + (na, nb_))
        mat = b.kernel(mat, adjoint)
        mat = np.moveaxis(a.kernel(np.moveaxis(mat, -2, -1), adjoint), -1, -2)
        return mat.reshape(lead + (mat.shape[-2] * mat.shape[-1],))

    return LinearMap(a.rows * b.rows, a.cols * b.cols, fld, nm, kernel)


def compose_map(outer: LinearMap, inner: LinearMap, name: str | None = None) -> LinearMap:
    """The product map ``outer @ inner`` (forward applies ``inner`` first)."""
    if outer.cols != inner.rows:
        raise ValueError(f"cannot compose {outer.name} ({outer.cols} cols) with {inner.name} ({inner.rows} rows)")
    fld = "complex" if "complex" in (outer.field, inner.field) else "real"
    nm = name or f"compose({outer.name}, {inner.name})"

    def kernel(u: np.ndarray, adjoint: bool) -> np.ndarray:
        if adjoint:
            return inner.kernel(outer.kernel(u, True), True)
        return outer.kernel(inner.kernel(u, False), False)

    return LinearMap(outer.rows, inner.cols, fld, nm, kernel)


def densify(m: LinearMap, cap: int = DENSIFY_CAP) -> np.ndarray:
    """Materialize the forward matrix by applying it to all basis vectors.

    Intended for oracle tests and debugging; refuses matrices with more than
    ``cap`` entries.
    """
    if m.rows * m.cols > cap:
        raise ValueError(f"densify: {m.rows}x{m.cols} exceeds cap of {cap} entries")
    dt = np.complex128 if m.field == "complex" else np.float64
    eye = np.eye(m.cols, dtype=dt)
    # kernel maps each row e_j to M e_j, so the result is the transpose
    return m.kernel(eye, False).T.copy()


def dense_to_csv(mat: np.ndarray, path) -> None:
    """Write a dense (possibly complex) matrix as CSV for debugging."""
    mat = np.asarray(mat)
    with open(path, "w", encoding="ascii") as fh:
        for row in mat:
            fh.write(",".join(repr(complex(v)) if np.iscomplexobj(mat) else repr(float(v)) for v in row))
            fh.write("\n")


# ---------------------------------------------------------------------------
# The two application-level bases
# ---------------------------------------------------------------------------


def sensing_map(dims: Dims) -> LinearMap:
    """Interferometric sensing map: ``forward`` takes a flattened volume to
    its (OPD-frequency x Hadamard-pattern) coefficients, matching the flat
    acquisition index of :mod:`spfti.core` (OPD slowest).  ``adjoint``
    synthesizes a volume from coefficients.
    """
    return kron_map(
        centered_dft(dims.n_xi),
        paley_hadamard(dims.n_p),
        name=f"sensing({dims.n_xi},{dims.n_p_bar})",
    )


def sparsity_map(dims: Dims) -> LinearMap:
    """Wavelet sparsity map: ``forward`` synthesizes a flattened volume from
    (1D wavenumber-wavelet x 2D pixel-wavelet) coefficients; ``adjoint`` is
    the analysis transform.
    """
    return kron_map(
        haar1d(dims.n_xi),
        haar2d_isotropic(dims.n_p),
        name=f"sparsity({dims.n_xi},{dims.n_p_bar})",
    )

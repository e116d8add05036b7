"""Problem dimensions, 3D/flat index mapping, and the hyperspectral volume container.

All public indices are 1-based: an acquisition slot is addressed either by its
flat index ``l`` in ``[1, n_hs]`` or by the triple ``(l_xi, l_x, l_y)`` with
``l_xi`` the OPD sample, ``l_x``/``l_y`` the spatial Hadamard frequencies.
The two are related by

    l = n_p * (l_xi - 1) + n_p_bar * (l_y - 1) + l_x

so ``l_x`` varies fastest and ``l_xi`` slowest.  Volume voxels use the same
rule with the wavenumber sample in place of ``l_xi`` and pixel coordinates in
place of the frequencies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = ["Dims", "Index3D", "flat_index", "unflatten_index", "HSVolume"]


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Dims:
    """Grid sizes of one acquisition setup.

    Attributes
    ----------
    n_xi : int
        Number of OPD samples (equals the number of wavenumber samples).
        Power of two, >= 2.
    n_p_bar : int
        Pixels along each spatial axis.  Power of two, >= 2.
    """

    n_xi: int
    n_p_bar: int

    def __post_init__(self):
        if not isinstance(self.n_xi, (int, np.integer)) or not is_power_of_two(self.n_xi) or self.n_xi < 2:
            raise ValueError(f"n_xi must be a power of two >= 2, got {self.n_xi!r}")
        if (
            not isinstance(self.n_p_bar, (int, np.integer))
            or not is_power_of_two(self.n_p_bar)
            or self.n_p_bar < 2
        ):
            raise ValueError(f"n_p_bar must be a power of two >= 2, got {self.n_p_bar!r}")

    @property
    def n_p(self) -> int:
        """Total pixel count (n_p_bar squared)."""
        return self.n_p_bar * self.n_p_bar

    @property
    def n_hs(self) -> int:
        """Total voxel / acquisition-slot count (n_xi * n_p)."""
        return self.n_xi * self.n_p


class Index3D(NamedTuple):
    """1-based (OPD, horizontal frequency, vertical frequency) triple."""

    l_xi: int
    l_x: int
    l_y: int


def flat_index(idx: Index3D | tuple[int, int, int], dims: Dims) -> int:
    """Map a 1-based 3D index to the 1-based flat index.

    Raises
    ------
    ValueError
        If any component is outside its admissible range.
    """
    l_xi, l_x, l_y = idx
    if not 1 <= l_xi <= dims.n_xi:
        raise ValueError(f"l_xi out of range [1, {dims.n_xi}]: {l_xi}")
    if not 1 <= l_x <= dims.n_p_bar:
        raise ValueError(f"l_x out of range [1, {dims.n_p_bar}]: {l_x}")
    if not 1 <= l_y <= dims.n_p_bar:
        raise ValueError(f"l_y out of range [1, {dims.n_p_bar}]: {l_y}")
    return dims.n_p * (l_xi - 1) + dims.n_p_bar * (l_y - 1) + l_x


def unflatten_index(l: int, dims: Dims) -> Index3D:
    """Inverse of :func:`flat_index`."""
    if not 1 <= l <= dims.n_hs:
        raise ValueError(f"flat index out of range [1, {dims.n_hs}]: {l}")
    rem = l - 1
    l_xi = rem // dims.n_p
    rem -= l_xi * dims.n_p
    l_y = rem // dims.n_p_bar
    l_x = rem - l_y * dims.n_p_bar
    return Index3D(l_xi + 1, l_x + 1, l_y + 1)


@dataclass
class HSVolume:
    """A real hyperspectral volume flattened in acquisition order.

    ``data[l - 1]`` holds the voxel at flat index ``l``, i.e. wavenumber
    slowest, then pixel row, then pixel column.
    """

    dims: Dims
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (self.dims.n_hs,):
            raise ValueError(
                f"volume data must have shape ({self.dims.n_hs},), got {self.data.shape}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("volume data contains non-finite entries")

    @classmethod
    def from_cube(cls, dims: Dims, cube: np.ndarray) -> "HSVolume":
        """Build from a (n_xi, n_p_bar, n_p_bar) array ordered (wavenumber, y, x)."""
        cube = np.asarray(cube, dtype=np.float64)
        expected = (dims.n_xi, dims.n_p_bar, dims.n_p_bar)
        if cube.shape != expected:
            raise ValueError(f"cube must have shape {expected}, got {cube.shape}")
        return cls(dims, cube.reshape(dims.n_hs))

    def to_cube(self) -> np.ndarray:
        """Return a (n_xi, n_p_bar, n_p_bar) view ordered (wavenumber, y, x)."""
        return self.data.reshape(self.dims.n_xi, self.dims.n_p_bar, self.dims.n_p_bar)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

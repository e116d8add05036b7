"""spfti: simulation and reconstruction for compressive single-pixel
Fourier-transform interferometric imaging.

Core objects: :class:`~spfti.core.Dims` and :class:`~spfti.core.HSVolume`;
matrix-free operators in :mod:`spfti.transforms`; sampling design in
:mod:`spfti.coherence`; acquisition simulation in :mod:`spfti.acquisition`;
solvers in :mod:`spfti.recovery`; phantoms and file formats in
:mod:`spfti.phantom`; the sweep harness in :mod:`spfti.experiment`; HTTP
service and CLI in :mod:`spfti.service` / :mod:`spfti.cli`.
"""

from .core import Dims, HSVolume, Index3D, flat_index, unflatten_index

__version__ = "0.1.0"

__all__ = ["Dims", "HSVolume", "Index3D", "flat_index", "unflatten_index", "__version__"]

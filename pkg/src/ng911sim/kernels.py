"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
twin. Set ``NG911SIM_PURE=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("NG911SIM_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass


def _backend(name: str | None):
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def mmc_waits(interarrival, work, mu: float, c: int, capacity: int | None = None, backend=None):
    """Per-arrival queue waits of a FIFO M/M/c pool (-1 marks a drop)."""
    cap = -1 if capacity is None else int(capacity)
    return _backend(backend).mmc_waits(
        np.ascontiguousarray(interarrival, dtype=np.float64),
        np.ascontiguousarray(work, dtype=np.float64), float(mu), int(c), cap,
    )


def hypercube_loss(interarrival, atom, work, pref, mu, backend=None):
    """Busy-mask occupancy times of a loss-mode nearest-available fleet."""
    return _backend(backend).hypercube_loss(
        np.ascontiguousarray(interarrival, dtype=np.float64),
        np.ascontiguousarray(atom, dtype=np.int64),
        np.ascontiguousarray(work, dtype=np.float64),
        np.ascontiguousarray(pref, dtype=np.int64),
        np.ascontiguousarray(np.broadcast_to(np.asarray(mu, float), (pref.shape[1],)), dtype=np.float64),
    )

"""Step-kernel backends.

The hot per-step work (vehicle solves, force mapping, bridge solve,
convergence loop) exists twice: a compiled Cython core and a NumPy
reference. The compiled core is used when the extension built
successfully; ``VBI_KERNELS=python`` or ``VBI_KERNELS=native`` forces
a choice. Run ``benchmarks/bench_kernels.py`` to compare them.
"""

from __future__ import annotations

import os

from . import py_kernels
from .plan import MAX_AXLES, MAX_VEHICLE_DOFS, CoupledPlan

try:
    from . import _native

    HAVE_NATIVE = True
except ImportError:
    _native = None
    HAVE_NATIVE = False


def get_backend(name: str | None = None):
    """Resolve a kernel backend module by name or environment.

    ``name`` (or ``VBI_KERNELS``) may be "native" or "python"; by
    default the compiled core is used when available.
    """
    choice = name or os.environ.get("VBI_KERNELS", "")
    if choice == "python":
        return py_kernels
    if choice == "native":
        if not HAVE_NATIVE:
            raise ImportError("compiled kernel core is not available")
        return _native
    if choice not in ("", None):
        raise ValueError(f"unknown kernel backend {choice!r}")
    return _native if HAVE_NATIVE else py_kernels


def active_backend_name(name: str | None = None) -> str:
    return get_backend(name).BACKEND_NAME


__all__ = [
    "CoupledPlan",
    "MAX_AXLES",
    "MAX_VEHICLE_DOFS",
    "HAVE_NATIVE",
    "get_backend",
    "active_backend_name",
    "py_kernels",
]

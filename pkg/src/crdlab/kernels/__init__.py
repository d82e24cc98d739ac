"""Hot inner loops with two interchangeable backends.

``CRDLAB_BACKEND=numpy`` forces the pure-numpy path; otherwise the numba
path is used when numba imports. Both backends expose identical names and
return bit-identical results for the coder kernels.
"""

from __future__ import annotations

import os

from . import _numpy as numpy_backend

KERNELS = (
    "dpcm_encode",
    "dpcm_reconstruct",
    "gamma_lengths",
    "gamma_encode",
    "gamma_decode",
    "kt_codelengths",
    "dp_backward",
    "dp_forward",
    "refine_ratios",
    "brute_force",
)

try:
    from . import _numba as numba_backend

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba_backend = None
    NUMBA_AVAILABLE = False


def _select() -> str:
    want = os.environ.get("CRDLAB_BACKEND", "").strip().lower()
    if want == "numpy" or not NUMBA_AVAILABLE:
        return "numpy"
    if want not in ("", "numba"):
        raise ValueError(f"CRDLAB_BACKEND must be 'numba' or 'numpy', got {want!r}")
    return "numba"


BACKEND = _select()


def backend(name: str | None = None):
    """Module holding the kernels for ``name`` (default: the active backend)."""
    name = name or BACKEND
    if name == "numba":
        if not NUMBA_AVAILABLE:
            raise RuntimeError("numba backend requested but numba is not installed")
        return numba_backend
    if name == "numpy":
        return numpy_backend
    raise ValueError(f"unknown backend {name!r}")


_active = backend()
dpcm_encode = _active.dpcm_encode
dpcm_reconstruct = _active.dpcm_reconstruct
gamma_lengths = _active.gamma_lengths
gamma_encode = _active.gamma_encode
gamma_decode = _active.gamma_decode
kt_codelengths = _active.kt_codelengths
dp_backward = _active.dp_backward
dp_forward = _active.dp_forward
refine_ratios = _active.refine_ratios
brute_force = _active.brute_force

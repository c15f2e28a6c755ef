"""Backend switch for the hot loops.

Numba-compiled kernels are used when numba imports and the environment
variable ``MDMID_DISABLE_NUMBA`` is unset or ``0``. Every kernel also has a
pure-numpy path; pass ``backend="numpy"`` or ``backend="numba"`` to force one.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
NUMBA_DISABLED = os.environ.get("MDMID_DISABLE_NUMBA", "0").lower() not in ("", "0", "false", "no")
DEFAULT_BACKEND = "numba" if HAVE_NUMBA and not NUMBA_DISABLED else "numpy"


def njit(func):
    if numba is None:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def resolve(backend):
    backend = backend or DEFAULT_BACKEND
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend

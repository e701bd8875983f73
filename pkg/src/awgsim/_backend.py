"""Kernel backend selection.

The heavy inner loops in this package (dead-time filtering, phase branch
tracking, the CHSH setting scan) ship in two flavors: a numba @njit build and
a pure numpy/python build. The AWGSIM_BACKEND environment variable picks one:

    AWGSIM_BACKEND=numpy   force the fallback path
    AWGSIM_BACKEND=numba   require numba (ImportError if it is missing)
    unset or "auto"        use numba when importable

Both builds consume identical pre-drawn random inputs, so results are
bit-identical across backends.
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    numba = None
    HAS_NUMBA = False

_flag = os.environ.get("AWGSIM_BACKEND", "auto").strip().lower() or "auto"

if _flag == "numpy":
    USE_NUMBA = False
elif _flag == "numba":
    if not HAS_NUMBA:
        raise ImportError("AWGSIM_BACKEND=numba but numba is not importable")
    USE_NUMBA = True
elif _flag == "auto":
    USE_NUMBA = HAS_NUMBA
else:
    raise ValueError(
        f"unrecognized AWGSIM_BACKEND value {_flag!r}; use 'numba', 'numpy' or 'auto'"
    )


def active_backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def resolve_backend(backend=None) -> bool:
    """Map an explicit backend request onto a use-numba bool."""
    if backend is None:
        return USE_NUMBA
    if backend == "numba":
        if not HAS_NUMBA:
            raise ValueError("numba backend requested but numba is not importable")
        return True
    if backend == "numpy":
        return False
    raise ValueError(f"unknown backend {backend!r}")

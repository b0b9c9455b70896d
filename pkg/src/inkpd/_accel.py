"""Optional numba acceleration.

Every hot kernel in :mod:`inkpd._kernels` exists twice: an ``@njit`` loop
version and a plain numpy version. The numba path is used when numba imports
and ``INKPD_NO_NUMBA`` is unset (or ``0``). Set ``INKPD_NO_NUMBA=1`` to force
the numpy path, e.g. for debugging or on platforms without LLVM.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional speedup
    numba = None

_DISABLE_VALUES = {"1", "true", "yes", "on"}

USE_NUMBA = numba is not None and os.environ.get("INKPD_NO_NUMBA", "0").lower() not in _DISABLE_VALUES


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if numba is None:  # pragma: no cover
        return func
    return numba.njit(cache=True)(func)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def set_backend(name: str) -> None:
    """Switch kernels at runtime (``"numba"`` or ``"numpy"``)."""
    global USE_NUMBA
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:  # pragma: no cover
        raise RuntimeError("numba is not installed")
    USE_NUMBA = name == "numba"

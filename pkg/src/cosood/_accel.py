"""Backend switch for the numba-compiled kernels.

Set ``COSOOD_DISABLE_NUMBA=1`` before import to force the pure-numpy path.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
_disabled = os.environ.get("COSOOD_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

_use_numba = HAVE_NUMBA and not _disabled


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise the identity decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def use_numba():
    return _use_numba


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` at runtime (benchmarks and tests)."""
    global _use_numba
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba is not installed")
        _use_numba = True
    elif name == "numpy":
        _use_numba = False
    else:
        raise ValueError(f"unknown backend {name!r}")


def backend():
    return "numba" if _use_numba else "numpy"

"""JIT switch.

Hot kernels are written once in a numba-compatible subset of numpy and
compiled with ``numba.njit`` unless the environment variable
``GVSSB_DISABLE_NUMBA`` is set to a truthy value (or numba is missing),
in which case the very same functions run as plain Python/numpy.
"""
import os

_FALSY = {"", "0", "false", "no", "off"}

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

NUMBA_DISABLED = os.environ.get("GVSSB_DISABLE_NUMBA", "").strip().lower() not in _FALSY
USE_NUMBA = _numba is not None and not NUMBA_DISABLED


def jit(func):
    """Compile ``func`` when numba is active, otherwise return it unchanged.

    The pure-Python original stays reachable through ``py_func`` and the
    compiled twin through :func:`compiled_version`, so tests and benchmarks
    can exercise both paths regardless of the environment flag.
    """
    if _numba is None:
        func.py_func = func
        return func
    compiled = _numba.njit(cache=True, nogil=True)(func)
    if USE_NUMBA:
        return compiled
    func.py_func = func
    func.jit_func = compiled
    return func


def compiled_version(func):
    """The numba-compiled twin of a kernel, or None when numba is unavailable."""
    if _numba is None:
        return None
    if hasattr(func, "jit_func"):
        return func.jit_func
    if hasattr(func, "py_func") and func.py_func is not func:
        return func
    return None


def python_version(func):
    return func.py_func

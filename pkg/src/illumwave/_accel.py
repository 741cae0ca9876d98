"""Backend selection for the hot kernels.

Kernels are compiled with numba unless ``ILLUM_WAVE_NUMBA`` is set to ``0``
(or numba is missing), in which case the vectorised numpy implementations
are used. Both backends stay importable so they can be compared directly.
"""

from __future__ import annotations

import contextlib
import os

try:
    import numba

    # skip the TBB probe, which only warns on older TBB builds
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FALSE = {"0", "false", "no", "off"}

HAVE_NUMBA = numba is not None
_backend = "numba" if HAVE_NUMBA and os.environ.get("ILLUM_WAVE_NUMBA", "1").lower() not in _FALSE else "numpy"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextlib.contextmanager
def use_backend(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def njit(*args, **kwargs):
    """``numba.njit`` with caching on; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    return numba.njit(*args, **kwargs)


if numba is not None:
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def set_threads(n: int | None) -> int:
    """Set the kernel thread count; falls back to ``ILLUM_WAVE_THREADS``.

    Returns the count actually in effect (clamped to what numba was started with).
    """
    if n is None:
        env = os.environ.get("ILLUM_WAVE_THREADS")
        n = int(env) if env else None
    if numba is None:
        return 1
    limit = numba.config.NUMBA_NUM_THREADS
    if n is None:
        return numba.get_num_threads()
    if n < 1:
        raise ValueError("thread count must be positive")
    numba.set_num_threads(min(n, limit))
    return numba.get_num_threads()

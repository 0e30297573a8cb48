"""Kernel backend selection.

The compiled ``intomo._core`` extension is used when importable; otherwise the
numpy fallback. Set ``INTOMO_BACKEND=python`` to force the fallback.
"""

import os

from intomo import _fallback

kernels = _fallback
name = "python"

if os.environ.get("INTOMO_BACKEND", "").lower() != "python":
    try:
        from intomo import _core
    except ImportError:
        pass
    else:
        kernels = _core
        name = "cython"


def get(backend=None):
    """Kernel module for ``backend`` ("cython", "python" or None for the active one)."""
    if backend is None:
        return kernels
    if backend == "python":
        return _fallback
    if backend == "cython":
        from intomo import _core
        return _core
    raise ValueError(f"unknown backend {backend!r}")


def available(backend: str) -> bool:
    try:
        get(backend)
    except ImportError:
        return False
    return True

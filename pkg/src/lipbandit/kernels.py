"""Backend selection for the inner loops.

The compiled extension is used when it imports; otherwise, or when
``LIPBANDIT_BACKEND=python`` is set, the pure-Python loops are used.
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels


def default_backend_name() -> str:
    forced = os.environ.get("LIPBANDIT_BACKEND")
    if forced:
        if forced not in BACKENDS:
            raise RuntimeError(f"LIPBANDIT_BACKEND={forced!r} unavailable; have {sorted(BACKENDS)}")
        return forced
    return "cython" if "cython" in BACKENDS else "python"


def get(name=None):
    return BACKENDS[name or default_backend_name()]


def chunk_steps(width: int, budget: int = 1 << 21) -> int:
    """Steps per block of pre-drawn uniforms for a given per-step width."""
    return max(1, budget // max(1, width))

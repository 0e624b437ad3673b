"""Kernel selection: compiled extension if importable, pure Python otherwise.

Set ``CARRYING_SIMPLEX_BACKEND=python`` to force the fallback.
"""
import os

from . import _pykernel

_requested = os.environ.get("CARRYING_SIMPLEX_BACKEND", "auto").lower()

_ckernel = None
if _requested != "python":
    try:
        from . import _ckernel
    except ImportError:
        if _requested == "cython":
            raise

BACKENDS = {"python": _pykernel.integrate_lv_batch}
if _ckernel is not None:
    BACKENDS["cython"] = _ckernel.integrate_lv_batch

BACKEND = "cython" if _ckernel is not None else "python"


def get_batch_integrator(name=None):
    """Return the LV batch integrator of the named (default: selected) backend."""
    return BACKENDS[name or BACKEND]

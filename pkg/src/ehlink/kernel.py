"""Slot-loop backend selection.

The compiled kernel is used when it imports; otherwise, or when
``EHLINK_PURE_PYTHON=1`` is set, the pure-Python loop runs instead.
"""
import os

from . import _kernel_py

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

BACKENDS = {"python": _kernel_py.run_chunk}
if _ckernel is not None:
    BACKENDS["cython"] = _ckernel.run_chunk

if _ckernel is not None and os.environ.get("EHLINK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    BACKEND = "cython"
else:
    BACKEND = "python"


def get_run_chunk(backend=None):
    name = backend or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable (have {sorted(BACKENDS)})") from None

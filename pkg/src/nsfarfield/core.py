"""Backend selection for the hot kernels.

The compiled extension is preferred; set ``NS_FARFIELD_PURE_PYTHON=1`` to
force the numpy fallback.
"""
import os

from . import _core_py

BACKEND = "python"
_impl = _core_py
if os.environ.get("NS_FARFIELD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _core_py

gammainc_pq = _impl.gammainc_pq
kernel_parts = _impl.kernel_parts
psi_values = _impl.psi_values
bilinear_sample = _impl.bilinear_sample


def backends():
    """Return the available backend modules keyed by name."""
    out = {"python": _core_py}
    try:
        from . import _core

        out["cython"] = _core
    except ImportError:
        pass
    return out

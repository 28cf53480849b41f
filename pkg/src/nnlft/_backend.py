"""Kernel backend selection.

The compiled extension is used when it imports; setting
``NNLFT_PURE_PYTHON=1`` forces the pure-Python kernels.
"""

import os

from . import _kernels_py

try:
    from . import _kernels as _kernels_ext
except ImportError:  # extension not built
    _kernels_ext = None

_BACKENDS = {"python": _kernels_py}
if _kernels_ext is not None:
    _BACKENDS["cython"] = _kernels_ext

if os.environ.get("NNLFT_PURE_PYTHON", "") not in ("", "0") or _kernels_ext is None:
    kernels = _kernels_py
else:
    kernels = _kernels_ext

BACKEND = kernels.NAME


def available():
    return sorted(_BACKENDS)


def get_kernels(name=None):
    """Kernel module by name; ``None`` gives the import-time default."""
    if name is None:
        return kernels
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available (have {available()})") from None

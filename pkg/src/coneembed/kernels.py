"""Kernel backend selection.

The compiled extension is used when it imports; setting
``CONE_EMBED_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("CONE_EMBED_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

pairwise_euclidean = _impl.pairwise_euclidean
pairwise_poincare = _impl.pairwise_poincare
lift_epoch = _impl.lift_epoch


def get_backend(name=None):
    """Return the kernel module for ``name`` ("cython", "python" or the active one)."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")

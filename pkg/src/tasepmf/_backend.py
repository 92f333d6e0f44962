"""Select the kernel backend at import time.

The compiled extension is used when it was built; ``TASEPMF_BACKEND=python``
forces the pure-Python kernels.
"""
import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

_forced = os.environ.get("TASEPMF_BACKEND", "").strip().lower()

kernels = _pykernels
BACKEND = "python"
if _forced != "python":
    try:
        from . import _ckernels
    except ImportError as exc:
        if _forced == "cython":
            raise
        log.debug("compiled kernels unavailable (%s); using pure Python", exc)
    else:
        kernels = _ckernels
        BACKEND = "cython"


def get_kernels(name=None):
    """Kernel module by name (``"python"`` / ``"cython"``), default the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")

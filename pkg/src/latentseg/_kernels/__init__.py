"""Training kernels: compiled when available, numpy otherwise.

Set ``LATENTSEG_PURE_PYTHON=1`` to force the numpy implementation.
"""
import os

from . import _pykernels

if os.environ.get("LATENTSEG_PURE_PYTHON") == "1":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

softmax_cce_batch = _impl.softmax_cce_batch
splc_batch = _impl.splc_batch
softmax_epoch = _impl.softmax_epoch
splc_epoch = _impl.splc_epoch


def available_backends():
    """Map backend name to kernel module for every backend importable here."""
    backends = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        backends["cython"] = _ckernels
    return backends

"""Hot sampling kernels: compiled extension with a pure-numpy fallback.

The Cython extension is preferred when importable; set PADEBLUR_NO_EXT=1 to
force the numpy fallback (used by the kernel benchmark for comparison).
Both backends expose the same functions and bit-compatible semantics.
"""

import logging
import os

from . import _fallback

logger = logging.getLogger(__name__)

_impl = _fallback
if not os.environ.get("PADEBLUR_NO_EXT"):
    try:
        from . import _ext as _impl  # type: ignore[no-redef]
    except ImportError:
        logger.info("compiled kernels unavailable, using numpy fallback")

BACKEND = _impl.BACKEND


def _dispatch(name):
    def call(*args, **kwargs):
        return getattr(_impl, name)(*args, **kwargs)

    call.__name__ = name
    return call


bilinear_gather = _dispatch("bilinear_gather")
bilinear_scatter = _dispatch("bilinear_scatter")
bilinear_coord_grad = _dispatch("bilinear_coord_grad")
bilinear_backward = _dispatch("bilinear_backward")
conv_shift_add = _dispatch("conv_shift_add")
conv_shift_gather = _dispatch("conv_shift_gather")

numpy_impl = _fallback


def get_impl(backend: str):
    """Return the kernel module for 'cython' or 'numpy' (for benchmarks)."""
    if backend == "numpy":
        return _fallback
    if backend == "cython":
        if _impl.BACKEND != "cython":
            raise ImportError("compiled kernels not built")
        return _impl
    raise ValueError(f"unknown backend {backend!r}")

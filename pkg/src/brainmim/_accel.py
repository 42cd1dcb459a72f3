"""Numba switch.

Hot loops are written once as plain Python and compiled with numba when it is
importable and not disabled. Setting ``BRAINMIM_DISABLE_NUMBA=1`` selects the
vectorized numpy fallbacks instead. The flag is read once at import time, so
flipping it requires a fresh interpreter.
"""
import logging
import os

logger = logging.getLogger(__name__)

ENV_FLAG = "BRAINMIM_DISABLE_NUMBA"

_disabled = os.environ.get(ENV_FLAG, "").strip().lower() not in ("", "0", "false", "no")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _disabled
BACKEND = "numba" if USE_NUMBA else "numpy"

if _disabled:
    logger.debug("numba disabled via %s, using numpy kernels", ENV_FLAG)


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache`` and ``nogil`` on, or a no-op without numba.

    Functions decorated here are always compiled when numba is installed, even
    if the numpy backend is selected, so the test-suite can cross-check both.
    Compilation is lazy and costs nothing unless the kernel is called.
    """
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)

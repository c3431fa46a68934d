"""Process-level tuning for large-array workloads."""

from __future__ import annotations

import ctypes
import ctypes.util
import logging

log = logging.getLogger(__name__)

_M_TRIM_THRESHOLD = -1
_M_MMAP_MAX = -4
_done = False


def tune_allocator() -> bool:
    """Keep freed activation buffers on the glibc heap instead of unmapping them.

    Training allocates and frees tens of megabytes per layer per step; with the
    default mmap policy every such buffer is page-faulted in afresh. Returns
    False (and does nothing) on non-glibc platforms.
    """
    global _done
    if _done:
        return True
    name = ctypes.util.find_library("c")
    if not name:
        return False
    try:
        libc = ctypes.CDLL(name)
        ok = libc.mallopt(_M_MMAP_MAX, 0) and libc.mallopt(_M_TRIM_THRESHOLD, 2**31 - 1)
    except (OSError, AttributeError):
        return False
    _done = bool(ok)
    log.debug("allocator tuning %s", "applied" if ok else "rejected")
    return _done

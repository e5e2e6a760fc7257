"""Weak adversarial networks for elliptic obstacle problems."""

import ctypes
import sys


def _tune_allocator():
    # glibc returns every >128 KiB numpy buffer to the OS on free; the page
    # faults on re-allocation cost more than the matmuls at width 80.
    if not sys.platform.startswith("linux"):
        return
    try:
        libc = ctypes.CDLL("libc.so.6")
        M_TRIM_THRESHOLD, M_MMAP_THRESHOLD = -1, -3
        libc.mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024)
        libc.mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024)
    except (OSError, AttributeError):
        pass


_tune_allocator()

__version__ = "0.1.0"

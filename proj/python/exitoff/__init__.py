"""Dual-threshold early-exit event detection and computation offloading.

The heavy lifting lives in the compiled extension; this package re-exports
its surface.
"""

from exitoff._core import *  # noqa: F401,F403
from exitoff._core import __doc__  # noqa: F401

__version__ = "0.1.0"

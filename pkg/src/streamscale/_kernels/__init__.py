"""Kernel backend selection.

The compiled extension is preferred when present; set STREAMSCALE_PURE=1
to force the pure-Python implementation. Both produce bit-identical
results, so the choice only affects speed.
"""

import os

from . import _pure

if os.environ.get("STREAMSCALE_PURE") == "1":
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"

advance_seconds = _impl.advance_seconds
catchup_seconds = _impl.catchup_seconds


def backend() -> str:
    """Name of the kernel implementation in use ('compiled' or 'pure')."""
    return BACKEND

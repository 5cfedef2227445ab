"""Hot kernels, compiled when available.

The Cython extension ``_core`` is preferred; ``_fallback`` (NumPy) is used
when the extension is missing or ``CV2XSIM_PURE`` is set to a non-empty
value other than ``0``. ``BACKEND`` names the active implementation.
"""

from __future__ import annotations

import os

from . import _fallback

_force_pure = os.environ.get("CV2XSIM_PURE", "") not in ("", "0")

try:
    if _force_pure:
        raise ImportError("pure backend forced")
    from . import _core as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "python"

segment_rect_hits = _impl.segment_rect_hits
pair_block_counts = _impl.pair_block_counts
candidate_scores = _impl.candidate_scores
rx_power_grid = _impl.rx_power_grid


def backends():
    """Return ``{name: module}`` for every importable backend."""
    found = {"python": _fallback}
    try:
        from . import _core

        found["cython"] = _core
    except ImportError:
        pass
    return found


__all__ = [
    "BACKEND",
    "backends",
    "segment_rect_hits",
    "pair_block_counts",
    "candidate_scores",
    "rx_power_grid",
]

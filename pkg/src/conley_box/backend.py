"""Kernel backend selection.

Prefers the compiled Cython extension when present; falls back to the
pure NumPy implementation.  Set ``CONLEY_BOX_PURE=1`` to force the
fallback (used by the benchmark and the parity tests).
"""

from __future__ import annotations

import os

from . import kernels_pure

if os.environ.get("CONLEY_BOX_PURE", "") not in ("", "0"):
    _impl = kernels_pure
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = kernels_pure

enclose_batch = _impl.enclose_batch
tarjan_scc = _impl.tarjan_scc
BACKEND = _impl.BACKEND


def backend_name() -> str:
    """Name of the active kernel backend ('compiled' or 'pure')."""
    return BACKEND

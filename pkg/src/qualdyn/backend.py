"""Import-time selection of the spectrum-estimation backend.

The compiled extension covers the built-in models; everything else (and any
environment without a built extension) falls back to the generic pure-Python
path.  ``QUALDYN_BACKEND=python`` forces the fallback, ``=compiled`` makes a
missing extension an error instead of a silent downgrade.
"""

from __future__ import annotations

import os

try:
    from . import _kernels
except ImportError:  # extension not built; pure-Python fallback
    _kernels = None

COMPILED_AVAILABLE = _kernels is not None

_VALID = ("auto", "compiled", "python")


def kernels():
    return _kernels


def resolve(requested: str, kernel_id) -> str:
    """Pick 'compiled' or 'python' for one estimation call."""
    if requested == "auto":
        requested = os.environ.get("QUALDYN_BACKEND", "auto").strip().lower() or "auto"
    if requested not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {requested!r}")
    if requested == "python":
        return "python"
    if requested == "compiled":
        if not COMPILED_AVAILABLE:
            raise RuntimeError("compiled kernels requested but the extension "
                               "is not built")
        if kernel_id is None:
            raise RuntimeError("model has no compiled kernel")
        return "compiled"
    if COMPILED_AVAILABLE and kernel_id is not None:
        return "compiled"
    return "python"


def active_backend() -> str:
    """The backend 'auto' resolves to for models with a compiled kernel."""
    forced = os.environ.get("QUALDYN_BACKEND", "").strip().lower()
    if forced == "python" or not COMPILED_AVAILABLE:
        return "python"
    return "compiled"

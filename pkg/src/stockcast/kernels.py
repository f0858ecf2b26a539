"""Kernel backend selection.

The compiled ``_core`` extension is used when it imports; otherwise the numpy
fallback in ``_pure``. Set ``STOCKCAST_BACKEND=python`` to force the fallback.
Results of the two backends agree to rounding error but are not bitwise equal,
so determinism guarantees hold per backend.
"""
import os

from . import _pure

BACKEND = "python"
_impl = _pure

if os.environ.get("STOCKCAST_BACKEND", "").lower() not in ("python", "pure", "numpy"):
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pure

rolling_mean_std = _impl.rolling_mean_std
lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward


def get_backend(name: str | None = None):
    """Return the kernel module by name (``"cython"`` or ``"python"``)."""
    if name is None:
        return _impl
    if name == "python":
        return _pure
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")

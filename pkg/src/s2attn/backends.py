"""Kernel backend selection.

The compiled extension is preferred when it imports; otherwise the NumPy
implementation serves every kernel.  ``S2ATTN_BACKEND=numpy|cython`` in the
environment pins the choice at import time, and :func:`set_active` switches
it at runtime (used by the benchmark to compare both).
"""

from __future__ import annotations

import os

from . import _npkernels

try:
    from . import _cykernels
except ImportError:
    _cykernels = None

_BACKENDS = {"numpy": _npkernels}
if _cykernels is not None:
    _BACKENDS["cython"] = _cykernels


def available():
    return sorted(_BACKENDS)


def get(name: str):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"backend {name!r} not available (have {available()})") from None


def _initial():
    pinned = os.environ.get("S2ATTN_BACKEND")
    if pinned:
        return get(pinned)
    return _BACKENDS.get("cython", _npkernels)


_active = _initial()


def active():
    return _active


def active_name() -> str:
    return _active.NAME


def set_active(name: str) -> None:
    global _active
    _active = get(name)

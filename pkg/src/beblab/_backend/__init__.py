"""Kernel backend selection: compiled core when available, pure Python
otherwise.  ``beblab.backend_info()`` reports which one is active."""
from __future__ import annotations

from . import _pure
from .pack import KernelTolerances, build_pack

try:
    from . import _core  # compiled extension

    _HAVE_CORE = True
except ImportError:
    _core = None
    _HAVE_CORE = False

active = _core if _HAVE_CORE else _pure
Engine = active.Engine
BACKEND_NAME = active.BACKEND_NAME

OK = _pure.OK
ERR_NO_X3 = _pure.ERR_NO_X3
ERR_NO_X4 = _pure.ERR_NO_X4
ERR_ESCAPE = _pure.ERR_ESCAPE
ERR_CHART = _pure.ERR_CHART
ERR_STEP_UNDERFLOW = _pure.ERR_STEP_UNDERFLOW
ERR_NO_VIRTUAL = _pure.ERR_NO_VIRTUAL
TRACE_LEN = _pure.TRACE_LEN

__all__ = [
    "Engine",
    "BACKEND_NAME",
    "KernelTolerances",
    "build_pack",
    "pure_engine",
    "compiled_available",
]


def pure_engine(pack):
    """Always the pure-Python engine (used by the benchmark and agreement
    tests)."""
    return _pure.Engine(pack)


def compiled_available() -> bool:
    return _HAVE_CORE

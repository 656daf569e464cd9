"""Numeric-kernel backend selection.

Two interchangeable backends implement the hot loops: the compiled Cython
extension geoseq._core ("c") and the pure-Python twin geoseq._pykernels
("python"). The compiled one is used when importable; set GEOSEQ_BACKEND=c
or GEOSEQ_BACKEND=python to force a choice. Callers go through the module
attribute `active` so tests and benchmarks can swap backends at runtime
with `use(...)`.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

from geoseq import _pykernels

try:
    from geoseq import _core
except ImportError:
    _core = None

_BACKENDS = {"python": _pykernels}
if _core is not None:
    _BACKENDS["c"] = _core


def _default():
    requested = os.environ.get("GEOSEQ_BACKEND")
    if requested:
        if requested not in _BACKENDS:
            raise ImportError(
                f"GEOSEQ_BACKEND={requested!r} is not available; "
                f"choices: {sorted(_BACKENDS)}")
        return _BACKENDS[requested]
    return _BACKENDS.get("c", _pykernels)


active = _default()


def backend_name() -> str:
    for name, module in _BACKENDS.items():
        if module is active:
            return name
    raise AssertionError("active backend not registered")


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


@contextmanager
def use(name: str):
    """Temporarily switch the active backend (tests and benchmarks)."""
    global active
    previous = active
    active = _BACKENDS[name]
    try:
        yield _BACKENDS[name]
    finally:
        active = previous

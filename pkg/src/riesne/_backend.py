"""Kernel backend selection.

The compiled extension ``riesne._core`` is used when it imports; otherwise the
numpy/pure-Python twin in ``riesne._fallback``. Set ``RIESNE_BACKEND=python``
to force the fallback, or ``RIESNE_BACKEND=compiled`` to fail loudly when the
extension is missing.
"""

import contextlib
import os

from . import _fallback

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

BACKENDS = {"python": _fallback}
if _core is not None:
    BACKENDS["compiled"] = _core


def _initial():
    choice = os.environ.get("RIESNE_BACKEND", "auto").lower()
    if choice == "auto":
        return _core if _core is not None else _fallback
    if choice not in BACKENDS:
        raise ImportError(f"RIESNE_BACKEND={choice!r} is not available; have {sorted(BACKENDS)}")
    return BACKENDS[choice]


_active = _initial()


def active():
    """The kernel module currently in use."""
    return _active


def set_backend(name):
    global _active
    if name not in BACKENDS:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {sorted(BACKENDS)}")
    _active = BACKENDS[name]


@contextlib.contextmanager
def use_backend(name):
    """Temporarily switch kernels, e.g. ``with use_backend("python"): ...``."""
    global _active
    previous = _active
    set_backend(name)
    try:
        yield _active
    finally:
        _active = previous

"""Kernel backend selection.

The compiled Cython extension is used when it imports; otherwise the
pure-Python kernels are used.  Set ``TOCSYNTH_BACKEND=python`` to force the
fallback.
"""

import importlib
import logging
import os

log = logging.getLogger(__name__)

_MODULES = {"compiled": "tocsynth._kernels", "python": "tocsynth._pykernels"}


def _load(name):
    return importlib.import_module(_MODULES[name])


def available():
    names = []
    for name in _MODULES:
        try:
            _load(name)
        except ImportError:
            continue
        names.append(name)
    return names


def use(name):
    """Switch the active backend at runtime; returns the previous name."""
    global kernels, name_in_use
    previous = name_in_use
    kernels = _load(name)
    name_in_use = name
    return previous


_requested = os.environ.get("TOCSYNTH_BACKEND", "").strip().lower()
if _requested == "python":
    kernels, name_in_use = _load("python"), "python"
else:
    try:
        kernels, name_in_use = _load("compiled"), "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        log.debug("compiled kernels unavailable, using pure-Python fallback")
        kernels, name_in_use = _load("python"), "python"

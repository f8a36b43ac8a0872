"""Matmul backend selection.

Three backends share one entry point:

* ``compiled``  — Cython kernel, fixed accumulation order (default when built)
* ``reference`` — pure numpy, bit-identical to ``compiled``, much slower
* ``blas``      — ``numpy.matmul``; fast but its accumulation order is
  platform/library dependent, so it is never used by tests and is opt-in only

``compiled`` and ``reference`` are both deterministic: identical inputs give
bit-identical outputs on every platform.  Selection happens at import time
(compiled if the extension built, else reference) and can be overridden with
the ``FFBENCH_BACKEND`` environment variable or :func:`set_backend`.
"""

import os

import numpy as np

from . import reference

__all__ = ["available_backends", "get_backend", "set_backend", "matmul"]

_BACKENDS = {"reference": reference.matmul, "blas": np.matmul}

try:
    from . import _kernels

    _BACKENDS["compiled"] = _kernels.matmul
    _DEFAULT = "compiled"
except ImportError:
    _DEFAULT = "reference"

_active = os.environ.get("FFBENCH_BACKEND", _DEFAULT)
if _active not in _BACKENDS:
    raise ImportError(
        f"FFBENCH_BACKEND={_active!r} is not available; "
        f"choose from {sorted(_BACKENDS)}"
    )


def available_backends():
    return sorted(_BACKENDS)


def get_backend():
    """Name of the backend used by :func:`matmul`."""
    return _active


def set_backend(name):
    """Switch the active matmul backend; returns the previous name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(_BACKENDS)}")
    previous = _active
    _active = name
    return previous


def matmul(a, b):
    """Multiply two C-contiguous float64 matrices with the active backend."""
    return _BACKENDS[_active](a, b)

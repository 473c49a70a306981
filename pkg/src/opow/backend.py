"""Kernel backend selection.

The trajectory kernels exist twice with identical contracts: a
numba-compiled module and a pure-numpy module.  numba is used when
importable unless the environment variable OPOW_NO_NUMBA is set to a
truthy value (1/true/yes/on).
"""

from __future__ import annotations

import os

from .errors import ValidationError

ENV_FLAG = "OPOW_NO_NUMBA"

_TRUTHY = {"1", "true", "yes", "on"}

_numba_module = None
_numba_failed = False


def _try_import_numba_kernels():
    global _numba_module, _numba_failed
    if _numba_module is None and not _numba_failed:
        try:
            from . import _kernels_numba
            _numba_module = _kernels_numba
        except ImportError:
            _numba_failed = True
    return _numba_module


def numba_disabled_by_env() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() in _TRUTHY


def default_backend() -> str:
    if numba_disabled_by_env():
        return "numpy"
    return "numba" if _try_import_numba_kernels() is not None else "numpy"


def get_kernels(backend: str | None = None):
    """Return the kernel module for the requested backend.

    backend None resolves via the environment flag and numba availability.
    """
    name = backend or default_backend()
    if name == "numpy":
        from . import _kernels_numpy
        return _kernels_numpy
    if name == "numba":
        mod = _try_import_numba_kernels()
        if mod is None:
            raise ValidationError("numba backend requested but numba is not importable")
        return mod
    raise ValidationError(f"unknown backend {name!r}; use 'numba' or 'numpy'")

"""Kernel backend selection.

Two interchangeable kernel implementations exist: `cadp._kernels_py`
(pure numpy, always available) and `cadp._kernels_cy` (Cython + BLAS,
built at install time when a compiler is present). Selection happens at
import: the CADP_BACKEND environment variable may force "python" or
"compiled"; the default "auto" prefers the compiled module and silently
falls back to numpy if it is missing.

The active module is exposed as `backend.kernels`; `use()` switches it at
runtime (used by the backend-agreement tests and the benchmark).
"""

import os

from . import _kernels_py
from .errors import ConfigurationError

try:
    from . import _kernels_cy
except ImportError:
    _kernels_cy = None

CHOICES = ("auto", "python", "compiled")

kernels = _kernels_py


def compiled_available():
    return _kernels_cy is not None


def use(name):
    """Select the kernel backend by name; returns the active backend name."""
    global kernels
    if name not in CHOICES:
        raise ConfigurationError(f"unknown backend {name!r}, expected one of {CHOICES}")
    if name == "python":
        kernels = _kernels_py
    elif name == "compiled":
        if _kernels_cy is None:
            raise ConfigurationError(
                "compiled kernels requested but the extension is not importable; "
                "reinstall with a C compiler available or set CADP_BACKEND=python"
            )
        kernels = _kernels_cy
    else:
        kernels = _kernels_cy if _kernels_cy is not None else _kernels_py
    return active_name()


def active_name():
    return "compiled" if kernels is _kernels_cy and _kernels_cy is not None else "python"


use(os.environ.get("CADP_BACKEND", "auto"))

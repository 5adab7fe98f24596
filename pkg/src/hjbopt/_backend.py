"""Import-time selection of the kernel backend.

The compiled extension ``hjbopt._kernels`` is preferred.  If it cannot be
imported (no compiler at install time) or the environment variable
``HJBOPT_BACKEND=python`` is set, the numpy fallback is used instead.
"""

import importlib
import logging
import os

log = logging.getLogger(__name__)

BACKEND_ENV = "HJBOPT_BACKEND"
THREADS_ENV = "HJBOPT_THREADS"


def load(name=None):
    """Return the kernel module for ``name`` ('cython', 'python' or None=auto)."""
    if name == "python":
        return importlib.import_module("hjbopt._kernels_py")
    if name == "cython":
        return importlib.import_module("hjbopt._kernels")
    if name is not None:
        raise ValueError(f"unknown backend {name!r}")
    try:
        return importlib.import_module("hjbopt._kernels")
    except ImportError as exc:  # pragma: no cover - depends on the build
        log.info("compiled kernels unavailable (%s); using numpy fallback", exc)
        return importlib.import_module("hjbopt._kernels_py")


def available():
    """Names of the backends that can be loaded in this installation."""
    names = []
    for name in ("cython", "python"):
        try:
            load(name)
            names.append(name)
        except ImportError:
            pass
    return names


def threads() -> int:
    """Solver thread count: ``HJBOPT_THREADS`` or the hardware count."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
        return n
    return os.cpu_count() or 1


_requested = os.environ.get(BACKEND_ENV) or None
kernels = load(_requested)
NAME = kernels.NAME

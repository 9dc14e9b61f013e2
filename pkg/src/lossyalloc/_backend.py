"""Kernel backend selection.

The compiled extension is preferred; ``LOSSYALLOC_BACKEND`` may be set to
``python`` (force the fallback) or ``cython`` (fail loudly if the extension
is missing).
"""

import os

from . import _fallback

_choice = os.environ.get("LOSSYALLOC_BACKEND", "auto").lower()

if _choice == "python":
    kernels = _fallback
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        if _choice == "cython":
            raise
        kernels = _fallback

BACKEND = kernels.NAME


def get_kernels(name=None):
    """Return the kernel module called ``name`` (``"cython"``/``"python"``)."""
    if name is None:
        return kernels
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names

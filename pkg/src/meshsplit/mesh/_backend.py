"""Select the router-sweep kernel at import.

``MESHSPLIT_KERNEL=python`` forces the pure-Python fallback; ``cython``
makes a missing extension an error instead of a silent fallback.
"""
import logging
import os

from . import _kernel_py

log = logging.getLogger(__name__)

_choice = os.environ.get("MESHSPLIT_KERNEL", "auto").lower()

compiled = None
if _choice != "python":
    try:
        from . import _kernel as compiled  # type: ignore[no-redef]
    except ImportError:
        if _choice == "cython":
            raise
        log.debug("compiled kernel unavailable, using pure-Python fallback")

python = _kernel_py
default = compiled if compiled is not None else python
KERNEL_NAME = "cython" if default is compiled else "python"


def get(name=None):
    if name is None:
        return default
    if name == "python":
        return python
    if name == "cython":
        if compiled is None:
            raise ImportError("compiled kernel meshsplit.mesh._kernel is not built")
        return compiled
    raise ValueError(f"unknown kernel {name!r}")

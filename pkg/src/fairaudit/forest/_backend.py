"""Kernel selection: the compiled core when importable, else the numpy fallback.

Set ``FAIRAUDIT_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _tree_core_py

BACKEND = "python"
kernels = _tree_core_py

if not os.environ.get("FAIRAUDIT_PURE_PYTHON"):
    try:
        from . import _tree_core as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        BACKEND = "compiled"


def get_kernels(name=None):
    """Return the kernel module for ``name`` ("compiled", "python") or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _tree_core_py
    if name == "compiled":
        from . import _tree_core
        return _tree_core
    raise ValueError(f"unknown backend {name!r}")

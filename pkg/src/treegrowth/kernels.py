"""Kernel selection: the compiled extension when importable, else pure Python.

Set ``TREEGROWTH_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("TREEGROWTH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled_backend  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

counter_uniform = _active.counter_uniform
marchal_grow = _active.marchal_grow
mean_leaf_depth = _active.mean_leaf_depth
dendritic_violations = _active.dendritic_violations
dendritic_from_tree = _active.dendritic_from_tree
dendritic_to_tree = _active.dendritic_to_tree

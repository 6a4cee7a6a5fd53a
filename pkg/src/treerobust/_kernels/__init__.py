"""Hot kernels with a compiled implementation and a pure-Python fallback.

The compiled module is used when it imports and ``TREEROBUST_PURE_PYTHON`` is
unset. Both backends stay importable for benchmarking and parity tests.
"""

import os

from . import _pykernels as python_backend

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and not os.environ.get("TREEROBUST_PURE_PYTHON"):
    backend = compiled_backend
    BACKEND = "compiled"
else:
    backend = python_backend
    BACKEND = "python"

OPTIMAL = python_backend.OPTIMAL
UNBOUNDED = python_backend.UNBOUNDED
ITERATION_LIMIT = python_backend.ITERATION_LIMIT


def pivot_loop(*args):
    return backend.pivot_loop(*args)


def dykstra(*args):
    return backend.dykstra(*args)


__all__ = [
    "BACKEND",
    "ITERATION_LIMIT",
    "OPTIMAL",
    "UNBOUNDED",
    "backend",
    "compiled_backend",
    "dykstra",
    "pivot_loop",
    "python_backend",
]

"""Select the simplex kernel: compiled when importable, numpy otherwise.

Set ``TCLINV_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
run_simplex = _pykernels.run_simplex
pivot = _pykernels.pivot

if os.environ.get("TCLINV_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        run_simplex = _ckernels.run_simplex
        pivot = _ckernels.pivot

OPTIMAL = _pykernels.OPTIMAL
UNBOUNDED = _pykernels.UNBOUNDED
ITERATION_LIMIT = _pykernels.ITERATION_LIMIT
NUMERICAL = _pykernels.NUMERICAL


def get_kernel(name=None):
    """Return ``(run_simplex, pivot)`` for ``name`` in {None, 'python', 'cython'}."""
    if name is None:
        return run_simplex, pivot
    if name == "python":
        return _pykernels.run_simplex, _pykernels.pivot
    if name == "cython":
        from . import _ckernels
        return _ckernels.run_simplex, _ckernels.pivot
    raise ValueError(f"unknown kernel {name!r}")

"""Hot numeric kernels with a compiled backend and a pure-numpy fallback.

Backend selection happens once at import time via the CIRKIT_NUMBA
environment variable: set it to "0" to force the numpy fallback, anything
else (or unset) uses the numba-compiled kernels when numba is importable.
benchmarks/bench_kernels.py imports both impl modules directly to compare.
"""

import os

from . import numpy_impl

NUMBA_ENABLED = False
_impl = numpy_impl

if os.environ.get("CIRKIT_NUMBA", "1") != "0":
    try:
        from . import numba_impl

        _impl = numba_impl
        NUMBA_ENABLED = True
    except ImportError:  # numba missing: silently fall back
        pass

BACKEND = "numba" if NUMBA_ENABLED else "numpy"

slerp_rows = _impl.slerp_rows
greedy_spaced_select = _impl.greedy_spaced_select
# BLAS wins over a compiled O(n^2 d) loop for the batch similarity argmax
# (see benchmarks/bench_kernels.py), so this kernel stays on the numpy path.
nearest_neighbor_indices = numpy_impl.nearest_neighbor_indices

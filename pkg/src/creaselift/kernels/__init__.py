"""Hot numeric kernels with numba/numpy dual implementations.

Every function in :mod:`creaselift.kernels.np_` has a numba ``@njit`` twin in
:mod:`creaselift.kernels.nb` with identical signature and semantics.  The
active implementation is chosen once at import time:

- ``CREASELIFT_NUMBA=0`` (or ``false``/``off``) forces the pure-numpy path;
- ``CREASELIFT_NUMBA=1`` requires numba and fails loudly if it is missing;
- unset/``auto`` uses numba when importable, numpy otherwise.

``creaselift.bench`` times both paths against each other.
"""

import os

from . import np_ as numpy_kernels

_FALSE = {"0", "false", "off", "no"}
_TRUE = {"1", "true", "on", "yes"}


def _resolve() -> bool:
    flag = os.environ.get("CREASELIFT_NUMBA", "auto").strip().lower()
    if flag in _FALSE:
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        if flag in _TRUE:
            raise ImportError(
                "CREASELIFT_NUMBA=1 but numba is not importable")
        return False
    return True


USE_NUMBA = _resolve()

if USE_NUMBA:
    from . import nb as _active
else:
    _active = numpy_kernels


def numba_kernels():
    """Import and return the numba kernel module (for benchmarks)."""
    from . import nb
    return nb


def active():
    """The kernel module selected at import time."""
    return _active


def using_numba() -> bool:
    return USE_NUMBA


closest_point_batch = _active.closest_point_batch
hash_query_batch = _active.hash_query_batch
hash_cell_pairs = _active.hash_cell_pairs
winding_batch = _active.winding_batch
winding_derivative_batch = _active.winding_derivative_batch
jacobi_eigh = _active.jacobi_eigh
reduced_elastic = _active.reduced_elastic

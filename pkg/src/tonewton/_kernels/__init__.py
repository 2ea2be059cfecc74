"""Hot kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it was built; otherwise (or when
``TONEWTON_BACKEND=numpy`` is set) the pure numpy twin is selected.
"""

import os

from . import _fallback

_compiled = None
if os.environ.get("TONEWTON_BACKEND", "").lower() != "numpy":
    try:
        from . import _core as _compiled
    except ImportError:
        _compiled = None

_impl = _compiled if _compiled is not None else _fallback

BACKEND = _impl.BACKEND
ipm_solve = _impl.ipm_solve
cubic_sdp_arrays = _impl.cubic_sdp_arrays
local_min = _impl.local_min
local_min_batch = _impl.local_min_batch

OPTIMAL = _fallback.OPTIMAL
MAX_ITERATIONS = _fallback.MAX_ITERATIONS
NUMERICAL_FAILURE = _fallback.NUMERICAL_FAILURE
INFEASIBLE = _fallback.INFEASIBLE
UNBOUNDED = _fallback.UNBOUNDED
LOCAL_MIN = _fallback.LOCAL_MIN
SECOND_ORDER_POINT = _fallback.SECOND_ORDER_POINT
NO_SECOND_ORDER_POINT = _fallback.NO_SECOND_ORDER_POINT
SOLVER_FAILED = _fallback.SOLVER_FAILED


def backends():
    """Available backend modules keyed by name (numpy is always present)."""
    out = {"numpy": _fallback}
    if _compiled is not None:
        out[_compiled.BACKEND] = _compiled
    return out

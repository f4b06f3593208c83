"""Hot-kernel dispatch: numba-jitted by default, pure numpy as fallback.

Set ``RANKGAUNTLET_NO_NUMBA=1`` (or any of true/yes/on) before import to force
the numpy path; it is also taken automatically when numba cannot be imported.
Both backends implement the same contracts and agree to float tolerance; see
``benchmarks/bench_kernels.py`` for a speed comparison.
"""

import os


def _numba_disabled() -> bool:
    return os.environ.get("RANKGAUNTLET_NO_NUMBA", "").strip().lower() in {
        "1",
        "true",
        "yes",
        "on",
    }


if _numba_disabled():
    from . import numpy_impl as _impl

    BACKEND = "numpy"
else:
    try:
        from . import numba_impl as _impl

        BACKEND = "numba"
    except ImportError:
        from . import numpy_impl as _impl

        BACKEND = "numpy"

ep_sgd = _impl.ep_sgd
masked_forward = _impl.masked_forward
sinkhorn_log_forward = _impl.sinkhorn_log_forward
sinkhorn_log_backward = _impl.sinkhorn_log_backward
solve_assignment_min = _impl.solve_assignment_min

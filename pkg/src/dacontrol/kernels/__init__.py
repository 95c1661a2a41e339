"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time:

* default: numba-jitted kernels (first call compiles; compiled artifacts
  are cached on disk, so later processes start fast);
* ``DACONTROL_NO_NUMBA=1`` in the environment, or numba failing to
  import, selects the pure-numpy implementations.

``benchmarks/kernel_bench.py`` times the two backends side by side.
"""

from __future__ import annotations

import os

__all__ = [
    "BACKEND",
    "GAUSS_WINDOW",
    "mixture_table_1d",
    "mixture_table_2d",
    "estimation_terms_1d",
    "estimation_terms_2d",
]

from ._shared import GAUSS_WINDOW


def _numba_disabled() -> bool:
    return os.environ.get("DACONTROL_NO_NUMBA", "").strip().lower() not in ("", "0", "false")


if _numba_disabled():
    from . import _numpy_impl as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _numba_impl as _impl

        BACKEND = "numba"
    except ImportError:
        from . import _numpy_impl as _impl

        BACKEND = "numpy"

mixture_table_1d = _impl.mixture_table_1d
mixture_table_2d = _impl.mixture_table_2d
estimation_terms_1d = _impl.estimation_terms_1d
estimation_terms_2d = _impl.estimation_terms_2d

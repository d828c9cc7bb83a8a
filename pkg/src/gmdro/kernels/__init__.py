"""Hot numeric kernels with two interchangeable backends.

The numba backend is the default.  Setting the environment variable
``GMDRO_NUMBA`` to ``0``/``off``/``false`` (or numba being unimportable)
selects the pure-numpy fallback.  Both backends implement identical
signatures and identical tie-breaking, so results do not depend on the
backend; only speed does.  ``benchmarks/bench_kernels.py`` compares them.
"""

import os

_flag = os.environ.get("GMDRO_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "off", "false", "no")

if _want_numba:
    try:
        from .numba_impl import btran_etas, damage_batch, ftran_etas, ratio_test

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba present in normal installs
        from .numpy_impl import btran_etas, damage_batch, ftran_etas, ratio_test

        BACKEND = "numpy"
else:
    from .numpy_impl import btran_etas, damage_batch, ftran_etas, ratio_test

    BACKEND = "numpy"

__all__ = ["BACKEND", "ftran_etas", "btran_etas", "ratio_test", "damage_batch"]

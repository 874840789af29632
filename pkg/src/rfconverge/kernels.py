"""Backend dispatch for the hot numeric kernels.

Two interchangeable backends implement the same kernel set:

* ``numba`` -- ``@njit(cache=True, nogil=True)`` scalar kernels (default);
* ``numpy`` -- pure-vectorized mirrors, bitwise-identical output.

Selection is pinned at import time by the environment variable
``RFCONVERGE_BACKEND`` (``numba`` or ``numpy``). Unset, numba is used when
importable and the numpy fallback otherwise.
"""

from __future__ import annotations

import os

_requested = os.environ.get("RFCONVERGE_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"RFCONVERGE_BACKEND={_requested!r}: expected 'numba' or 'numpy'"
    )

if _requested in ("", "numba"):
    try:
        from . import _kernels_numba as _impl

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import _kernels_numpy as _impl

        BACKEND = "numpy"
else:
    from . import _kernels_numpy as _impl

    BACKEND = "numpy"

fit_tree = _impl.fit_tree
predict_tree = _impl.predict_tree
mse_replicates = _impl.mse_replicates
oob_replicates = _impl.oob_replicates
vi_replicates = _impl.vi_replicates
prefix_mse_path = _impl.prefix_mse_path
impurity_importance = _impl.impurity_importance

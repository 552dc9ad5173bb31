"""Backend selection for the primal-dual inner loop.

The compiled extension ``metricflow._ckernel`` is used when it imports;
otherwise the numpy implementation in ``metricflow._pykernel`` is used.
Setting ``METRICFLOW_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _pykernel

BACKEND = "python"
pdhg_iterate = _pykernel.pdhg_iterate
prox_phi = _pykernel.prox_phi

if os.environ.get("METRICFLOW_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernel
    except ImportError:  # pragma: no cover - depends on the build
        pass
    else:
        BACKEND = "cython"
        pdhg_iterate = _ckernel.pdhg_iterate
        prox_phi = _ckernel.prox_phi


def get_backend(name: str | None = None):
    """Return ``(pdhg_iterate, prox_phi)`` for ``name`` in {"cython", "python"}, or the default."""
    if name is None:
        return pdhg_iterate, prox_phi
    if name == "python":
        return _pykernel.pdhg_iterate, _pykernel.prox_phi
    if name == "cython":
        from . import _ckernel

        return _ckernel.pdhg_iterate, _ckernel.prox_phi
    raise ValueError(f"unknown backend {name!r}")

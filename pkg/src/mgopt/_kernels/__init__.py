"""Hot-loop kernels with a compiled core and a pure numpy fallback.

The compiled extension (Cython) is used when it imported cleanly; set
MGOPT_PURE_PYTHON=1 to force the numpy fallback.  Both backends expose
the same functions with identical semantics; `BACKEND` records which one
is active.
"""

import os

from . import _pure

_force_pure = os.environ.get("MGOPT_PURE_PYTHON", "").strip().lower() in {"1", "true", "yes"}

if _force_pure:
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"

boxqp_pg = _impl.boxqp_pg
boxqp_track = _impl.boxqp_track
pogd_run = _impl.pogd_run
cb_run = _impl.cb_run
rls_update = _impl.rls_update

__all__ = [
    "BACKEND",
    "boxqp_pg",
    "boxqp_track",
    "pogd_run",
    "cb_run",
    "rls_update",
]

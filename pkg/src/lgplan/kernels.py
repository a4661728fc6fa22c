"""Backend selection for the geometry kernels.

Imports the compiled extension when available, otherwise falls back to the
pure Python implementation.  Set LGPLAN_PURE_PY=1 to force the fallback
(useful for benchmarking and for testing backend parity).
"""

import os

if os.environ.get("LGPLAN_PURE_PY"):
    from lgplan import _kernels_py as _impl
else:
    try:
        from lgplan import _kernels as _impl
    except ImportError:
        from lgplan import _kernels_py as _impl

BACKEND = _impl.BACKEND
transform_polygon = _impl.transform_polygon
polys_overlap = _impl.polys_overlap
poly_in_bounds = _impl.poly_in_bounds
collide_indices = _impl.collide_indices

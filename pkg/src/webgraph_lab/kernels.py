"""Kernel backend selection.

The compiled extension is used when importable; ``WEBGRAPH_LAB_PURE=1``
forces the numpy fallback.  Both expose the same functions.
"""

import os

from . import _kernels_py as python_backend

compiled_backend = None
if os.environ.get("WEBGRAPH_LAB_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_backend  # type: ignore[attr-defined]
    except ImportError:  # pragma: no cover - depends on build
        compiled_backend = None

backend = compiled_backend or python_backend
BACKEND = backend.BACKEND

bfs_centrality = backend.bfs_centrality
split_scan = backend.split_scan
forest_predict = backend.forest_predict
forest_contributions = backend.forest_contributions

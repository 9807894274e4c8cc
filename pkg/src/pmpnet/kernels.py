"""Kernel backend selection.

The compiled extension is used when it imported cleanly; otherwise the
numpy fallback takes over. Set PMPNET_PURE=1 to force the fallback (the
benchmark uses this to time both paths).
"""

import os

from . import _kernels_py

if os.environ.get("PMPNET_PURE", "") == "1":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND

pairwise_sqdist = _impl.pairwise_sqdist
knn_select = _impl.knn_select
edge_concat = _impl.edge_concat
edge_concat_backward = _impl.edge_concat_backward
max_first = _impl.max_first
max_first_backward = _impl.max_first_backward

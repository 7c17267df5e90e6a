"""Pick the kernel implementation at import time.

The compiled ``_core`` extension is preferred. Set ``NSTEPLAB_BACKEND=python``
to force the numpy fallback (e.g. for benchmarking or debugging).
"""
from __future__ import annotations

import os

from nsteplab import _fallback

if os.environ.get("NSTEPLAB_BACKEND", "").lower() == "python":
    kernels = _fallback
    BACKEND = "python"
else:
    try:
        from nsteplab import _core as kernels
    except ImportError:  # extension not built
        kernels = _fallback
        BACKEND = "python"
    else:
        BACKEND = "compiled"

SARSA = _fallback.SARSA
TREE_BACKUP = _fallback.TREE_BACKUP
QSIGMA = _fallback.QSIGMA
RETRACE = _fallback.RETRACE
QLEARNING = _fallback.QLEARNING
MIN_STORED_PROB = _fallback.MIN_STORED_PROB

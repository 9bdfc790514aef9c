"""Backend selection for the belief kernels.

The compiled Cython module is used when it imports; otherwise the numpy
reference implementation.  ``BELIEFPLAN_BACKEND=python`` forces the fallback
and ``BELIEFPLAN_BACKEND=compiled`` makes a missing extension an error.
"""
from __future__ import annotations

import os

from . import _pykernels

_requested = os.environ.get("BELIEFPLAN_BACKEND", "auto").lower()

if _requested == "python":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _pykernels

BACKEND: str = _impl.BACKEND
MIN_EVIDENCE: float = _pykernels.MIN_EVIDENCE

predict = _impl.predict
obs_probs = _impl.obs_probs
condition = _impl.condition
expected = _impl.expected
marginals = _impl.marginals
project = _impl.project
expand = _impl.expand
sparse_search = _impl.sparse_search


def backends():
    """Map of importable backend name -> kernel module (for benchmarks and parity tests)."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["compiled"] = _ckernels
    except ImportError:
        pass
    return found

"""Hot kernels with a compiled core and a numpy fallback.

The compiled module is used when importable; set ``AGENTFM_KERNEL=python``
to force the fallback.
"""

import os

import numpy as np

from ..errors import InvalidArgumentError
from . import _fallback

try:
    if os.environ.get("AGENTFM_KERNEL", "").lower() == "python":
        raise ImportError("fallback forced")
    from . import _dtw as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "python"


def _as_seq(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidArgumentError("DTW needs non-empty 1-D sequences")
    return arr


def _pack(seqs):
    arrs = [_as_seq(s) for s in seqs]
    offsets = np.zeros(len(arrs) + 1, dtype=np.intp)
    if arrs:
        offsets[1:] = np.cumsum([a.size for a in arrs])
        values = np.concatenate(arrs)
    else:
        values = np.zeros(1)
    return values, offsets


def dtw_distance(a, b, impl=None) -> float:
    """Classic DTW with ``|a_i - b_j|`` cost and match/insert/delete steps."""
    impl = impl or _impl
    return float(impl.dtw_distance(_as_seq(a), _as_seq(b)))


def dtw_matrix(seqs_a, seqs_b=None, impl=None) -> np.ndarray:
    """Pairwise DTW distances; ``seqs_b=None`` means A against itself."""
    impl = impl or _impl
    va, oa = _pack(seqs_a)
    if seqs_b is None:
        return impl.dtw_matrix_flat(va, oa, va, oa, True)
    vb, ob = _pack(seqs_b)
    return impl.dtw_matrix_flat(va, oa, vb, ob, False)


__all__ = ["BACKEND", "dtw_distance", "dtw_matrix"]

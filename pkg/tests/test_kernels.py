import functools
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agentfm import _kernels
from agentfm._kernels import _fallback
from agentfm.errors import InvalidArgumentError


def dtw_oracle(a, b):
    """Textbook recursion over the full table."""

    @functools.lru_cache(maxsize=None)
    def d(i, j):
        if i == 0 and j == 0:
            return 0.0
        if i == 0 or j == 0:
            return float("inf")
        return abs(a[i - 1] - b[j - 1]) + min(d(i - 1, j - 1), d(i - 1, j), d(i, j - 1))

    return d(len(a), len(b))


seq = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=20)
backends = [_fallback]
try:
    from agentfm._kernels import _dtw

    backends.append(_dtw)
except ImportError:
    pass


@pytest.mark.criterion(4, "property suites")
@pytest.mark.parametrize("impl", backends, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
@settings(max_examples=300, deadline=None)
@given(seq, seq)
def test_matches_oracle(impl, a, b):
    assert _kernels.dtw_distance(a, b, impl=impl) == pytest.approx(dtw_oracle(tuple(a), tuple(b)), rel=1e-9, abs=1e-9)


@given(seq, seq)
def test_symmetric_nonnegative(a, b):
    d = _kernels.dtw_distance(a, b)
    assert d >= 0
    assert d == pytest.approx(_kernels.dtw_distance(b, a), rel=1e-12, abs=1e-12)
    assert _kernels.dtw_distance(a, a) == 0.0


def test_hand_example():
    assert _kernels.dtw_distance([1, 3], [1, 2, 3]) == 1.0


@pytest.mark.parametrize("bad", [[], [[1.0, 2.0]], np.zeros((2, 2))])
def test_rejects_bad_input(bad):
    with pytest.raises(InvalidArgumentError):
        _kernels.dtw_distance(bad, [1.0])


@settings(max_examples=30, deadline=None)
@given(st.lists(seq, min_size=1, max_size=6), st.lists(seq, min_size=1, max_size=6))
def test_matrix_matches_pairwise(xs, ys):
    for impl in backends:
        m = _kernels.dtw_matrix(xs, ys, impl=impl)
        assert m.shape == (len(xs), len(ys))
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                assert m[i, j] == pytest.approx(dtw_oracle(tuple(x), tuple(y)), rel=1e-9, abs=1e-9)


def test_self_matrix_symmetric():
    rng = np.random.default_rng(1)
    xs = [rng.normal(size=rng.integers(1, 15)) for _ in range(8)]
    for impl in backends:
        m = _kernels.dtw_matrix(xs, impl=impl)
        assert np.array_equal(m, m.T)
        assert np.all(np.diag(m) == 0)


def test_backends_agree():
    rng = np.random.default_rng(2)
    xs = [rng.normal(size=60) for _ in range(10)]
    ref = _kernels.dtw_matrix(xs, impl=_fallback)
    for impl in backends:
        assert np.allclose(_kernels.dtw_matrix(xs, impl=impl), ref, rtol=1e-12, atol=1e-12)


@pytest.mark.skipif(len(backends) < 2, reason="compiled kernel not built")
def test_compiled_backend_selected():
    assert _kernels.BACKEND == "cython"


def test_forced_fallback():
    env = dict(os.environ, AGENTFM_KERNEL="python")
    out = subprocess.run(
        [sys.executable, "-c", "from agentfm import _kernels as k; print(k.BACKEND, k.dtw_distance([1, 3], [1, 2, 3]))"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.split() == ["python", "1.0"]

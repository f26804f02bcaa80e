"""Backend selection for the hot numeric kernels.

``TPRNN_BACKEND`` picks the implementation at import time:

* ``auto`` (default) - use numba when it imports cleanly, else pure numpy
* ``numba``          - require the jitted kernels, fail loudly otherwise
* ``numpy``          - force the pure-numpy fallback

``benchmarks/bench_kernels.py`` times the two backends against each other.
"""

import os

from ..errors import ConfigError

_KERNEL_NAMES = (
    "conv1d_fwd", "conv1d_bwd",
    "pool_max_fwd", "pool_min_fwd", "pool_avg_fwd",
    "pool_extreme_bwd", "pool_avg_bwd",
    "rnn_tanh_fwd", "rnn_tanh_bwd",
    "lstm_fwd", "lstm_bwd",
    "gru_fwd", "gru_bwd",
)


def _select():
    choice = os.environ.get("TPRNN_BACKEND", "auto").strip().lower() or "auto"
    if choice not in ("auto", "numba", "numpy"):
        raise ConfigError(
            f"TPRNN_BACKEND must be one of auto|numba|numpy, got '{choice}'")
    if choice == "numpy":
        from . import numpy_backend
        return numpy_backend, "numpy"
    try:
        from . import numba_backend
        return numba_backend, "numba"
    except ImportError:
        if choice == "numba":
            raise ConfigError("TPRNN_BACKEND=numba but numba is not importable")
        from . import numpy_backend
        return numpy_backend, "numpy"


_impl, BACKEND = _select()

conv1d_fwd = _impl.conv1d_fwd
conv1d_bwd = _impl.conv1d_bwd
pool_max_fwd = _impl.pool_max_fwd
pool_min_fwd = _impl.pool_min_fwd
pool_avg_fwd = _impl.pool_avg_fwd
pool_extreme_bwd = _impl.pool_extreme_bwd
pool_avg_bwd = _impl.pool_avg_bwd
rnn_tanh_fwd = _impl.rnn_tanh_fwd
rnn_tanh_bwd = _impl.rnn_tanh_bwd
lstm_fwd = _impl.lstm_fwd
lstm_bwd = _impl.lstm_bwd
gru_fwd = _impl.gru_fwd
gru_bwd = _impl.gru_bwd


def warmup():
    """Run every kernel once on tiny inputs, forcing any JIT compilation."""
    import numpy as np

    x = np.arange(8.0).reshape(4, 2)
    k = np.ones((2, 2))
    dy = conv1d_fwd(x, k, 2)
    conv1d_bwd(np.ones_like(dy), x, k, 2)
    y, arg = pool_max_fwd(x, 2, 2)
    pool_extreme_bwd(np.ones_like(y), arg, 4)
    y, arg = pool_min_fwd(x, 2, 2)
    pool_extreme_bwd(np.ones_like(y), arg, 4)
    pool_avg_bwd(np.ones_like(pool_avg_fwd(x, 2, 2)), 4, 2, 2)
    wx1, wh1, b1 = np.ones((2, 3)), np.ones((3, 3)), np.zeros(3)
    (hs,) = rnn_tanh_fwd(x, wx1, wh1, b1)
    rnn_tanh_bwd(np.ones_like(hs), x, wx1, wh1, b1, hs)
    wx4, wh4, b4 = np.ones((2, 12)), np.ones((3, 12)), np.zeros(12)
    res = lstm_fwd(x, wx4, wh4, b4)
    lstm_bwd(np.ones_like(res[0]), x, wx4, wh4, b4, *res)
    wx3, wh3, b3 = np.ones((2, 9)), np.ones((3, 9)), np.zeros(9)
    res = gru_fwd(x, wx3, wh3, b3)
    gru_bwd(np.ones_like(res[0]), x, wx3, wh3, b3, *res)

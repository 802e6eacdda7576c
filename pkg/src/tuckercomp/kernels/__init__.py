"""Entrywise Tucker kernels with backend selection at import time.

The compiled extension is preferred when present; otherwise the numpy
implementation is used. Set ``TUCKER_KERNELS=cython`` or
``TUCKER_KERNELS=numpy`` to force a backend (forcing ``cython`` raises if the
extension is not built). ``TUCKER_THREADS`` caps kernel parallelism; the
current kernels are serial, so any positive value is accepted and acts as an
upper bound.
"""

import os

import numpy as np

from . import _sparse_np


def _select_backend():
    requested = os.environ.get("TUCKER_KERNELS", "auto").strip().lower()
    if requested not in ("auto", "cython", "numpy"):
        raise ValueError(
            "TUCKER_KERNELS must be one of auto/cython/numpy, got %r" % requested
        )
    if requested == "numpy":
        return _sparse_np, "numpy"
    try:
        from . import _sparse_cy
    except ImportError:
        if requested == "cython":
            raise ImportError(
                "TUCKER_KERNELS=cython but the compiled extension is not "
                "available; build it with `python setup.py build_ext --inplace`"
            )
        return _sparse_np, "numpy"
    return _sparse_cy, "cython"


_impl, BACKEND = _select_backend()


def thread_cap():
    """Upper bound on kernel threads from TUCKER_THREADS (default 1)."""
    raw = os.environ.get("TUCKER_THREADS")
    if raw is None:
        return 1
    cap = int(raw)
    if cap < 1:
        raise ValueError("TUCKER_THREADS must be a positive integer")
    return cap


def _as_c(core, factors):
    core = np.ascontiguousarray(core, dtype=np.float64)
    factors = [np.ascontiguousarray(u, dtype=np.float64) for u in factors]
    return core, factors


def _as_idx(ix):
    return np.ascontiguousarray(ix, dtype=np.int64)


def tucker_gather(core, u1, u2, u3, i1, i2, i3):
    """Evaluate a Tucker point at index triples without densifying.

    ``core`` is an (r1, r2, r3) array, ``u_d`` are (n_d, r_d) factors and the
    ``i_d`` are equal-length integer arrays of 0-based indices. Returns the
    length-n vector of entries of core x1 u1 x2 u2 x3 u3 at those positions.
    """
    core, (u1, u2, u3) = _as_c(core, (u1, u2, u3))
    return _impl.tucker_gather(core, u1, u2, u3, _as_idx(i1), _as_idx(i2), _as_idx(i3))


def gradient_blocks(core, u1, u2, u3, i1, i2, i3, weights):
    """Partial-derivative blocks of a weighted sampled square loss.

    For samples (i1[k], i2[k], i3[k]) with weights w[k], returns
    (z1, z2, z3, zcore) where z1[p] = sum over samples with i1[k] == p of
    w[k] * (core x2 u2[i2[k]] x3 u3[i3[k]]), analogously for z2 and z3, and
    zcore = sum_k w[k] * outer(u1[i1[k]], u2[i2[k]], u3[i3[k]]).

    These are the unfolding products S_d (U x U) G_d^T of the sparse tensor S
    with values w, computed at O(n r1 r2 r3) without forming Kronecker
    products.
    """
    core, (u1, u2, u3) = _as_c(core, (u1, u2, u3))
    w = np.ascontiguousarray(weights, dtype=np.float64)
    return _impl.gradient_blocks(
        core, u1, u2, u3, _as_idx(i1), _as_idx(i2), _as_idx(i3), w
    )

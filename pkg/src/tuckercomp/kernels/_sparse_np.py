"""Pure-numpy fallback for the entrywise Tucker kernels.

Work is chunked over the sample index so intermediate arrays stay small;
within a chunk the contractions run through einsum. The accumulation order
over chunks is fixed, so repeated calls in the same process are
reproducible.
"""

import numpy as np

_CHUNK = 4096


def tucker_gather(core, u1, u2, u3, i1, i2, i3):
    """Values of (core x1 u1 x2 u2 x3 u3) at the index triples (i1, i2, i3)."""
    n = i1.shape[0]
    r1, r2, r3 = core.shape
    out = np.empty(n)
    flat = core.reshape(r1 * r2, r3)
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        t1 = u1[i1[lo:hi]]
        t2 = u2[i2[lo:hi]]
        t3 = u3[i3[lo:hi]]
        # (r1*r2, k) <- contract mode 3, then fold in modes 2 and 1
        tmp = (flat @ t3.T).reshape(r1, r2, -1)
        tmp = np.einsum("abk,kb->ak", tmp, t2)
        out[lo:hi] = np.einsum("ak,ka->k", tmp, t1)
    return out


def gradient_blocks(core, u1, u2, u3, i1, i2, i3, weights):
    """Accumulate the four partial-derivative blocks of the sampled objective.

    Returns (z1, z2, z3, zcore) where z_d collects, per factor row, the
    weighted contraction of the core with the other two factor rows, and
    zcore is the weighted triple outer product accumulated over all samples.
    """
    n1 = u1.shape[0]
    n2 = u2.shape[0]
    n3 = u3.shape[0]
    r1, r2, r3 = core.shape
    z1 = np.zeros((n1, r1))
    z2 = np.zeros((n2, r2))
    z3 = np.zeros((n3, r3))
    zcore = np.zeros((r1, r2, r3))
    n = i1.shape[0]
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        t1 = u1[i1[lo:hi]]
        t2 = u2[i2[lo:hi]]
        t3 = u3[i3[lo:hi]]
        w = weights[lo:hi]
        kb = np.einsum("abc,kc->kab", core, t3)
        w1 = np.einsum("kab,kb->ka", kb, t2)
        w2 = np.einsum("kab,ka->kb", kb, t1)
        w3 = np.einsum("abc,ka,kb->kc", core, t1, t2)
        np.add.at(z1, i1[lo:hi], w[:, None] * w1)
        np.add.at(z2, i2[lo:hi], w[:, None] * w2)
        np.add.at(z3, i3[lo:hi], w[:, None] * w3)
        zcore += np.einsum("k,ka,kb,kc->abc", w, t1, t2, t3)
    return z1, z2, z3, zcore

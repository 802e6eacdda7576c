# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled entrywise Tucker kernels.

Serial loops over the sample index; cost O(n r1 r2 r3) with no temporary
larger than the core. Deterministic regardless of the caller's thread count.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def tucker_gather(const double[:, :, ::1] core, const double[:, ::1] u1, const double[:, ::1] u2,
                  const double[:, ::1] u3, const long long[::1] i1, const long long[::1] i2,
                  const long long[::1] i3):
    """Values of (core x1 u1 x2 u2 x3 u3) at the index triples (i1, i2, i3)."""
    cdef Py_ssize_t n = i1.shape[0]
    cdef Py_ssize_t r1 = core.shape[0], r2 = core.shape[1], r3 = core.shape[2]
    cdef Py_ssize_t k, a, b, c, p1, p2, p3
    cdef double acc, row, t
    out = np.empty(n)
    cdef double[::1] ov = out
    for k in range(n):
        p1 = i1[k]
        p2 = i2[k]
        p3 = i3[k]
        acc = 0.0
        for a in range(r1):
            row = 0.0
            for b in range(r2):
                t = 0.0
                for c in range(r3):
                    t += core[a, b, c] * u3[p3, c]
                row += t * u2[p2, b]
            acc += row * u1[p1, a]
        ov[k] = acc
    return out


def gradient_blocks(const double[:, :, ::1] core, const double[:, ::1] u1, const double[:, ::1] u2,
                    const double[:, ::1] u3, const long long[::1] i1, const long long[::1] i2,
                    const long long[::1] i3, const double[::1] weights):
    """Accumulate the four partial-derivative blocks of the sampled objective."""
    cdef Py_ssize_t n = i1.shape[0]
    cdef Py_ssize_t n1 = u1.shape[0], n2 = u2.shape[0], n3 = u3.shape[0]
    cdef Py_ssize_t r1 = core.shape[0], r2 = core.shape[1], r3 = core.shape[2]
    cdef Py_ssize_t k, a, b, c, p1, p2, p3
    cdef double w, t, ua, uab

    z1 = np.zeros((n1, r1))
    z2 = np.zeros((n2, r2))
    z3 = np.zeros((n3, r3))
    zcore = np.zeros((r1, r2, r3))
    cdef double[:, ::1] z1v = z1, z2v = z2, z3v = z3
    cdef double[:, :, ::1] zgv = zcore
    # per-sample scratch
    tab_arr = np.empty((r1, r2))
    w3_arr = np.empty(r3)
    cdef double[:, ::1] tab = tab_arr
    cdef double[::1] w3 = w3_arr

    for k in range(n):
        p1 = i1[k]
        p2 = i2[k]
        p3 = i3[k]
        w = weights[k]
        # tab[a,b] = sum_c core[a,b,c] * u3[p3,c]
        for a in range(r1):
            for b in range(r2):
                t = 0.0
                for c in range(r3):
                    t += core[a, b, c] * u3[p3, c]
                tab[a, b] = t
        # z1 row: contract tab with u2 row; z2 row: contract tab with u1 row
        for a in range(r1):
            t = 0.0
            for b in range(r2):
                t += tab[a, b] * u2[p2, b]
            z1v[p1, a] += w * t
        for b in range(r2):
            t = 0.0
            for a in range(r1):
                t += tab[a, b] * u1[p1, a]
            z2v[p2, b] += w * t
        # z3 row: contract core with u1 and u2 rows
        for c in range(r3):
            w3[c] = 0.0
        for a in range(r1):
            ua = u1[p1, a]
            for b in range(r2):
                uab = ua * u2[p2, b]
                for c in range(r3):
                    w3[c] += uab * core[a, b, c]
        for c in range(r3):
            z3v[p3, c] += w * w3[c]
        # weighted triple outer product into the core block
        for a in range(r1):
            ua = w * u1[p1, a]
            for b in range(r2):
                uab = ua * u2[p2, b]
                for c in range(r3):
                    zgv[a, b, c] += uab * u3[p3, c]
    return z1, z2, z3, zcore

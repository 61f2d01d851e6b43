"""Fused numba kernels for the fixed F(2x2, 3x3) input and output transforms.

Only valid for the standard ``B_T`` / ``A_T`` constants; callers fall back to
the generic numpy path when numba is missing or the constants differ.
"""

from __future__ import annotations

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

AVAILABLE = numba is not None

if AVAILABLE:

    @numba.njit(cache=True, nogil=True)
    def input_transform(xp, v):
        """xp: padded (C, N, Hp, Wp); v: (16, C, N, th, tw) output."""
        c_, n_, _, _ = xp.shape
        th, tw = v.shape[3], v.shape[4]
        for c in range(c_):
            for n in range(n_):
                for i in range(th):
                    r0 = xp[c, n, 2 * i]
                    r1 = xp[c, n, 2 * i + 1]
                    r2 = xp[c, n, 2 * i + 2]
                    r3 = xp[c, n, 2 * i + 3]
                    for j in range(tw):
                        q = 2 * j
                        # row pass: B^T d, one column k at a time
                        t00 = r0[q] - r2[q]
                        t01 = r0[q + 1] - r2[q + 1]
                        t02 = r0[q + 2] - r2[q + 2]
                        t03 = r0[q + 3] - r2[q + 3]
                        t10 = r1[q] + r2[q]
                        t11 = r1[q + 1] + r2[q + 1]
                        t12 = r1[q + 2] + r2[q + 2]
                        t13 = r1[q + 3] + r2[q + 3]
                        t20 = r2[q] - r1[q]
                        t21 = r2[q + 1] - r1[q + 1]
                        t22 = r2[q + 2] - r1[q + 2]
                        t23 = r2[q + 3] - r1[q + 3]
                        t30 = r1[q] - r3[q]
                        t31 = r1[q + 1] - r3[q + 1]
                        t32 = r1[q + 2] - r3[q + 2]
                        t33 = r1[q + 3] - r3[q + 3]
                        # column pass: (B^T d) B
                        v[0, c, n, i, j] = t00 - t02
                        v[1, c, n, i, j] = t01 + t02
                        v[2, c, n, i, j] = t02 - t01
                        v[3, c, n, i, j] = t01 - t03
                        v[4, c, n, i, j] = t10 - t12
                        v[5, c, n, i, j] = t11 + t12
                        v[6, c, n, i, j] = t12 - t11
                        v[7, c, n, i, j] = t11 - t13
                        v[8, c, n, i, j] = t20 - t22
                        v[9, c, n, i, j] = t21 + t22
                        v[10, c, n, i, j] = t22 - t21
                        v[11, c, n, i, j] = t21 - t23
                        v[12, c, n, i, j] = t30 - t32
                        v[13, c, n, i, j] = t31 + t32
                        v[14, c, n, i, j] = t32 - t31
                        v[15, c, n, i, j] = t31 - t33

    @numba.njit(cache=True, nogil=True)
    def output_transform(m, bias, out):
        """m: (16, O, N, th, tw); out: (N, O, 2*th, 2*tw)."""
        _, o_, n_, th, tw = m.shape
        s = np.empty((2, 4), dtype=m.dtype)
        for n in range(n_):
            for o in range(o_):
                b = bias[o]
                for i in range(th):
                    for j in range(tw):
                        for k in range(4):
                            m0 = m[k, o, n, i, j]
                            m1 = m[4 + k, o, n, i, j]
                            m2 = m[8 + k, o, n, i, j]
                            m3 = m[12 + k, o, n, i, j]
                            s[0, k] = m0 + m1 + m2
                            s[1, k] = m1 - m2 - m3
                        for a in range(2):
                            out[n, o, 2 * i + a, 2 * j] = s[a, 0] + s[a, 1] + s[a, 2] + b
                            out[n, o, 2 * i + a, 2 * j + 1] = s[a, 1] - s[a, 2] - s[a, 3] + b

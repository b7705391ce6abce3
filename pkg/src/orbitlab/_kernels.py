"""Numba kernels for SL_2(Z) Frobenius-ball enumeration.

Each element with top row (a, b) lies on the line (c, d) = (c0 + k a, d0 + k b),
where a d0 - b c0 = 1.  With n = a^2 + b^2 and u = a c0 + b d0 one has the
identity n (c^2 + d^2) = (n k + u)^2 + 1, so the bound a^2+b^2+c^2+d^2 <= N becomes
|n k + u| <= isqrt(n (N - n) - 1), an exact integer test.

All arithmetic is int64.  Callers must keep N <= MAX_NORM_SQ so that n (N - n) fits.
"""

import math

import numpy as np
from numba import njit

MAX_NORM_SQ = 2**60 // 2**30  # n (N - n) <= N^2 / 4 < 2^62 for N <= 2^30


@njit(cache=True)
def isqrt64(x):
    if x < 0:
        return -1
    s = np.int64(math.sqrt(float(x)))
    while s * s > x:
        s -= 1
    while (s + 1) * (s + 1) <= x:
        s += 1
    return s


@njit(cache=True)
def ext_gcd(a, b):
    old_r, r = a, b
    old_s, s = np.int64(1), np.int64(0)
    old_t, t = np.int64(0), np.int64(1)
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


@njit(cache=True)
def _k_range(n, u, N):
    rad = n * (N - n) - 1
    if rad < 0:
        return np.int64(1), np.int64(0)
    L = isqrt64(rad)
    kmax = (L - u) // n
    kmin = -((L + u) // n)
    return kmin, kmax


@njit(cache=True)
def _top_row(a, b):
    g, x, y = ext_gcd(a, b)
    # a x + b y = 1  ->  d0 = x, c0 = -y
    c0 = -y
    d0 = x
    return g, c0, d0


@njit(cache=True)
def sl2z_counts(norm_sq_bounds):
    """Exact #{gamma in SL_2(Z): |gamma|_F^2 <= N} for each N in an ascending array."""
    nb = norm_sq_bounds.shape[0]
    counts = np.zeros(nb, dtype=np.int64)
    Nmax = norm_sq_bounds[nb - 1]
    R = isqrt64(Nmax)
    for a in range(-R, R + 1):
        rb = isqrt64(Nmax - a * a)
        for b in range(-rb, rb + 1):
            n = a * a + b * b
            if n == 0:
                continue
            g, c0, d0 = _top_row(np.int64(a), np.int64(b))
            if g != 1:
                continue
            u = a * c0 + b * d0
            for j in range(nb):
                N = norm_sq_bounds[j]
                if n > N:
                    continue
                kmin, kmax = _k_range(n, u, N)
                if kmax >= kmin:
                    counts[j] += kmax - kmin + 1
    return counts


@njit(cache=True)
def sl2z_fill(N, a_start, b_start, out):
    """Write ball elements (a, b, c, d) into ``out`` starting at top row (a_start, b_start).

    Returns (filled, next_a, next_b, done).  A top row is never split across calls,
    so ``out`` must hold at least 2 isqrt(N) + 3 rows.
    """
    cap = out.shape[0]
    R = isqrt64(N)
    filled = 0
    a = a_start
    b = b_start
    while a <= R:
        rb = isqrt64(N - a * a)
        if b < -rb:
            b = -rb
        while b <= rb:
            n = a * a + b * b
            if n != 0:
                g, c0, d0 = _top_row(np.int64(a), np.int64(b))
                if g == 1:
                    u = a * c0 + b * d0
                    kmin, kmax = _k_range(n, u, N)
                    if kmax >= kmin:
                        if filled + (kmax - kmin + 1) > cap:
                            return filled, a, b, False
                        for k in range(kmin, kmax + 1):
                            out[filled, 0] = a
                            out[filled, 1] = b
                            out[filled, 2] = c0 + k * a
                            out[filled, 3] = d0 + k * b
                            filled += 1
            b += 1
        a += 1
        if a <= R:
            b = -isqrt64(N - a * a)
    return filled, a, b, True

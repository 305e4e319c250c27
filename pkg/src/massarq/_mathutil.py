"""Exact binomials, big-integer logarithms and Poisson weights."""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

EXACT_K_LIMIT = 512


def ceil_log2_int(x: int) -> int:
    """Exact ``ceil(log2(x))`` for a positive integer."""
    if x < 1:
        raise ValueError("ceil_log2 needs x >= 1")
    return (x - 1).bit_length()


def log2_int(x: int) -> float:
    """``log2(x)`` for an arbitrarily large positive integer."""
    if x < 1:
        raise ValueError("log2 needs x >= 1")
    e = x.bit_length()
    if e <= 1000:
        return math.log2(x)
    shift = e - 64
    return math.log2(x >> shift) + shift


def log2_comb(n: int, k: int) -> float:
    """``log2 C(n, k)``; exact big integers up to ``k = 512``."""
    if k < 0 or k > n:
        raise ValueError("need 0 <= k <= n")
    k = min(k, n - k)
    if k <= EXACT_K_LIMIT:
        return log2_int(math.comb(n, k))
    # sum log((n - i) / (k - i)) without forming lgamma(n), which loses all
    # precision for n ~ 2^64
    i = np.arange(k, dtype=np.float64)
    terms = np.log1p(-i / n) + math.log(n) - np.log(k - i)
    return math.fsum(terms) / math.log(2)


def ceil_log2_comb(n: int, k: int) -> int:
    """Exact ``ceil(log2 C(n, k))``."""
    if k < 0 or k > n:
        raise ValueError("need 0 <= k <= n")
    return ceil_log2_int(math.comb(n, k))


def floor_mul(eps: float, n: int) -> int:
    """``floor(eps * n)`` evaluated exactly on the binary value of ``eps``."""
    return math.floor(Fraction(eps) * n)


def poisson_support(lam: float, tail: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Values and pmf of Poisson(lam), truncated so the dropped mass < ``tail``.

    The cut points come from the exact tail masses, not from ``1 - sum(pmf)``,
    which rounding keeps near 1e-13 for large ``lam``.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if lam == 0:
        return np.array([0]), np.array([1.0])
    half = tail / 2

    # smallest hi with P(K > hi) < tail/2
    lo_h, hi_h = int(lam), int(lam + 12 * math.sqrt(lam) + 40)
    while gammainc_int(hi_h + 1, lam) >= half:
        hi_h *= 2
    while hi_h - lo_h > 1:
        mid = (lo_h + hi_h) // 2
        if gammainc_int(mid + 1, lam) < half:
            hi_h = mid
        else:
            lo_h = mid
    hi = hi_h

    # largest lo with P(K < lo) < tail/2
    lo = 0
    a, c = 0, int(lam)
    if c > 0 and gammaincc_int(c, lam) < half:
        lo = c
    else:
        while c - a > 1:
            mid = (a + c) // 2
            if gammaincc_int(mid, lam) < half:
                a = mid
            else:
                c = mid
        lo = a
    k = np.arange(lo, hi + 1)
    p = np.exp(k * math.log(lam) - lam - _lgamma_vec(k + 1.0))
    return k, p


def _lgamma_vec(x: np.ndarray) -> np.ndarray:
    return np.array([math.lgamma(v) for v in x], dtype=np.float64)


def gammainc_int(m: int, x: float) -> float:
    """Regularized lower incomplete gamma ``P(m, x)`` for integer shape ``m >= 1``.

    Equals the Erlang(m) CDF at ``x`` (unit scale) and ``P(Poisson(x) >= m)``.
    Small-x side uses the series ``e^-x x^m/m! sum_j x^j/((m+1)..(m+j))``, the
    other side ``1 - e^-x sum_{i<m} x^i/i!``, so neither loses relative accuracy
    in its own tail.
    """
    if m < 1:
        raise ValueError("shape must be a positive integer")
    if x <= 0:
        return 0.0
    if x < m + 1:
        term, total, j = 1.0, 1.0, 1
        while term > 1e-17 * total:
            term *= x / (m + j)
            total += term
            j += 1
        return math.exp(m * math.log(x) - x - math.lgamma(m + 1)) * total
    return 1.0 - gammaincc_int(m, x)


def gammaincc_int(m: int, x: float) -> float:
    """Upper tail ``Q(m, x) = 1 - P(m, x) = e^-x sum_{i<m} x^i / i!``."""
    if m < 1:
        raise ValueError("shape must be a positive integer")
    if x <= 0:
        return 1.0
    if x < m + 1:
        return 1.0 - gammainc_int(m, x)
    # sum from the largest term downwards in log space
    log_terms = [i * math.log(x) - math.lgamma(i + 1) for i in range(m)]
    top = max(log_terms)
    s = math.fsum(math.exp(t - top) for t in log_terms)
    return math.exp(top - x + math.log(s))

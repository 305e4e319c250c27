"""Arithmetic in GF(2^b) for 1 <= b <= 32 and dense linear solving.

Elements are plain integers in ``[0, 2^b)``; addition is XOR.  Each field is
described by a :class:`FieldSpec` holding the reduction polynomial (with the
leading ``x^b`` term implicit).  Fields with ``b <= 16`` get log/antilog
tables; wider fields fall back to carry-less multiplication.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numba
import numpy as np

MAX_WIDTH = 32
TABLE_WIDTH = 16
FULL_TABLE_WIDTH = 8

# Lexicographically smallest irreducible polynomial of each degree, low bits
# only (the x^b term is implicit).
DEFAULT_POLYS = {
    1: 0x0, 2: 0x3, 3: 0x3, 4: 0x3, 5: 0x5, 6: 0x3, 7: 0x3, 8: 0x1B,
    9: 0x3, 10: 0x9, 11: 0x5, 12: 0x9, 13: 0x1B, 14: 0x21, 15: 0x3,
    16: 0x2B, 17: 0x9, 18: 0x9, 19: 0x27, 20: 0x9, 21: 0x5, 22: 0x3,
    23: 0x21, 24: 0x1B, 25: 0x9, 26: 0x1B, 27: 0x27, 28: 0x3, 29: 0x5,
    30: 0x3, 31: 0x9, 32: 0x8D,
}


class ZeroInverse(ZeroDivisionError):
    """Raised when inverting the zero element."""


class SingularMatrix(ArithmeticError):
    """Raised by :func:`solve` when the system matrix is rank deficient."""


# --------------------------------------------------------------------------
# polynomial helpers over GF(2), on Python ints
# --------------------------------------------------------------------------

def poly_mod(a: int, m: int) -> int:
    dm = m.bit_length() - 1
    while a and a.bit_length() - 1 >= dm:
        a ^= m << (a.bit_length() - 1 - dm)
    return a


def poly_mulmod(a: int, b: int, m: int) -> int:
    deg = m.bit_length() - 1
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a >> deg:
            a ^= m
    return r


def poly_gcd(a: int, b: int) -> int:
    while b:
        a, b = b, poly_mod(a, b)
    return a


def is_irreducible_exhaustive(full_poly: int) -> bool:
    """Trial division by every polynomial of degree 1..deg/2."""
    deg = full_poly.bit_length() - 1
    if deg < 1:
        return False
    for d in range(1, deg // 2 + 1):
        for low in range(1 << d):
            if poly_mod(full_poly, (1 << d) | low) == 0:
                return False
    return True


def is_irreducible_rabin(full_poly: int) -> bool:
    """Rabin's irreducibility test; fast for any degree."""
    n = full_poly.bit_length() - 1
    if n < 1:
        return False
    if n == 1:
        return True

    def x_pow_2k(k):
        r = 2
        for _ in range(k):
            r = poly_mulmod(r, r, full_poly)
        return r

    if x_pow_2k(n) != poly_mod(2, full_poly):
        return False
    primes = [p for p in range(2, n + 1)
              if n % p == 0 and all(p % q for q in range(2, int(p ** 0.5) + 1))]
    return all(poly_gcd(full_poly, x_pow_2k(n // p) ^ 2) == 1 for p in primes)


def _prime_factors(n: int) -> list[int]:
    out, p = [], 2
    while p * p <= n:
        if n % p == 0:
            out.append(p)
            while n % p == 0:
                n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


# --------------------------------------------------------------------------
# field description
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    """GF(2^b) with reduction polynomial ``x^b + reduction_poly``."""

    b: int
    reduction_poly: int = field(default=-1)

    def __post_init__(self):
        if not 1 <= self.b <= MAX_WIDTH:
            raise ValueError(f"field width must be in 1..{MAX_WIDTH}, got {self.b}")
        if self.reduction_poly == -1:
            object.__setattr__(self, "reduction_poly", DEFAULT_POLYS[self.b])
        if not 0 <= self.reduction_poly < (1 << self.b):
            raise ValueError("reduction_poly must have degree < b")
        if not _check_irreducible(self.b, self.reduction_poly):
            raise ValueError(f"x^{self.b} + {self.reduction_poly:#x} is reducible")

    @property
    def order(self) -> int:
        return 1 << self.b

    @property
    def full_poly(self) -> int:
        return (1 << self.b) | self.reduction_poly

    @property
    def has_tables(self) -> bool:
        return self.b <= TABLE_WIDTH

    @cached_property
    def generator(self) -> int:
        """Smallest primitive element."""
        q1 = self.order - 1
        factors = _prime_factors(q1) if q1 > 1 else []
        for g in range(1, self.order):
            if all(self._pow(g, q1 // p) != 1 for p in factors):
                return g
        raise AssertionError("no primitive element")  # unreachable for irreducible polys

    @cached_property
    def exp_table(self) -> np.ndarray:
        """Antilog table of length 2(q-1) so that log sums need no modulo."""
        if not self.has_tables:
            raise ValueError("tables only exist for b <= 16")
        q1 = self.order - 1
        exp = np.empty(2 * q1, dtype=np.int64)
        x = 1
        g = self.generator
        for i in range(q1):
            exp[i] = x
            x = self._mul(x, g)
        exp[q1:] = exp[:q1]
        return exp

    @cached_property
    def log_table(self) -> np.ndarray:
        log = np.zeros(self.order, dtype=np.int64)
        q1 = self.order - 1
        log[self.exp_table[:q1]] = np.arange(q1)
        return log

    @cached_property
    def mul_table(self) -> np.ndarray:
        """Full q x q product table (b <= 8 only)."""
        if self.b > FULL_TABLE_WIDTH:
            raise ValueError("full product table only exists for b <= 8")
        a = np.arange(self.order)
        return mul_array(a[:, None], a[None, :], self).astype(np.uint8)

    @cached_property
    def inv_table(self) -> np.ndarray:
        q1 = self.order - 1
        out = np.zeros(self.order, dtype=np.int64)
        out[1:] = self.exp_table[(q1 - self.log_table[1:]) % q1]
        return out

    def _mul(self, a: int, b: int) -> int:
        return poly_mulmod(a, b, self.full_poly)

    def _pow(self, a: int, e: int) -> int:
        r = 1
        while e:
            if e & 1:
                r = self._mul(r, a)
            a = self._mul(a, a)
            e >>= 1
        return r

    def check(self, a: int) -> int:
        if not 0 <= a < self.order:
            raise ValueError(f"{a} is not an element of GF(2^{self.b})")
        return a


@lru_cache(maxsize=None)
def _check_irreducible(b: int, low: int) -> bool:
    if b > TABLE_WIDTH and DEFAULT_POLYS[b] == low:
        return True
    full = (1 << b) | low
    if b <= TABLE_WIDTH:
        return is_irreducible_exhaustive(full)
    return is_irreducible_rabin(full)


@lru_cache(maxsize=None)
def field_spec(b: int) -> FieldSpec:
    """Shared default field of width ``b``."""
    return FieldSpec(b)


# --------------------------------------------------------------------------
# scalar operations
# --------------------------------------------------------------------------

def add(a: int, b: int) -> int:
    return a ^ b


def mul(a: int, b: int, spec: FieldSpec) -> int:
    spec.check(a)
    spec.check(b)
    if a == 0 or b == 0:
        return 0
    if spec.has_tables:
        return int(spec.exp_table[spec.log_table[a] + spec.log_table[b]])
    return spec._mul(a, b)


def inv(a: int, spec: FieldSpec) -> int:
    spec.check(a)
    if a == 0:
        raise ZeroInverse("zero has no multiplicative inverse")
    if spec.has_tables:
        q1 = spec.order - 1
        return int(spec.exp_table[(q1 - spec.log_table[a]) % q1])
    return spec._pow(a, spec.order - 2)


# --------------------------------------------------------------------------
# array operations
# --------------------------------------------------------------------------

def mul_array(a, b, spec: FieldSpec) -> np.ndarray:
    """Elementwise product with numpy broadcasting."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if spec.has_tables:
        exp, log = spec.exp_table, spec.log_table
        out = exp[log[a] + log[b]]
        return np.where((a == 0) | (b == 0), 0, out)
    a, b = np.broadcast_arrays(a.astype(np.uint64), b.astype(np.uint64))
    return _clmul_reduce_array(a.ravel(), b.ravel(), np.uint64(spec.reduction_poly),
                               spec.b).reshape(a.shape).astype(np.int64)


def matvec(H, z, spec: FieldSpec) -> np.ndarray:
    """Matrix-vector product over the field."""
    prods = mul_array(np.asarray(H), np.asarray(z)[None, :], spec)
    return np.bitwise_xor.reduce(prods, axis=1) if prods.shape[1] else np.zeros(len(prods), np.int64)


def solve(H, y, spec: FieldSpec) -> np.ndarray:
    """Solve ``H z = y`` for square ``H``.

    Gaussian elimination with row pivoting.  Raises :class:`SingularMatrix`
    when ``H`` is rank deficient.
    """
    A = np.array(H, dtype=np.int64, copy=True)
    rhs = np.array(y, dtype=np.int64, copy=True)
    k = A.shape[0]
    if A.shape != (k, k) or rhs.shape != (k,):
        raise ValueError("solve expects a KxK matrix and a length-K vector")
    if k and (A.min() < 0 or A.max() >= spec.order or rhs.min() < 0 or rhs.max() >= spec.order):
        raise ValueError("entries must be field elements")
    if spec.b <= FULL_TABLE_WIDTH:
        A8, r8 = A.astype(np.uint8), rhs.astype(np.uint8)
        ok = _solve_tab(A8, r8, spec.mul_table, spec.inv_table.astype(np.uint8))
        rhs = r8.astype(np.int64)
    elif spec.has_tables:
        ok = _solve_log(A, rhs, spec.exp_table, spec.log_table, spec.order - 1)
    else:
        Au, ru = A.astype(np.uint64), rhs.astype(np.uint64)
        ok = _solve_clmul(Au, ru, np.uint64(spec.reduction_poly), spec.b,
                          poly_bit_positions(spec.reduction_poly))
        rhs = ru.astype(np.int64)
    if not ok:
        raise SingularMatrix(f"{k}x{k} system is singular over GF(2^{spec.b})")
    return rhs


def is_singular(H, spec: FieldSpec) -> bool:
    """Rank test by forward elimination (no back substitution)."""
    if spec.b <= FULL_TABLE_WIDTH:
        return bool(_rank_deficient_tab(np.array(H, dtype=np.uint8), spec.mul_table,
                                        spec.inv_table.astype(np.uint8)))
    if spec.has_tables:
        return bool(_rank_deficient_log(np.array(H, dtype=np.int64), spec.exp_table,
                                        spec.log_table, spec.order - 1))
    try:
        solve(H, np.zeros(len(H), dtype=np.int64), spec)
    except SingularMatrix:
        return True
    return False


# --------------------------------------------------------------------------
# compiled kernels
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _clmul_reduce(a, b, poly, width):
    top = np.uint64(1) << np.uint64(width - 1)
    mask = (top << np.uint64(1)) - np.uint64(1)
    r = np.uint64(0)
    for _ in range(width):
        if b & np.uint64(1):
            r ^= a
        b >>= np.uint64(1)
        carry = a & top
        a = (a << np.uint64(1)) & mask
        if carry:
            a ^= poly
    return r


@numba.njit(cache=True)
def _clmul_reduce_array(a, b, poly, width):
    out = np.empty(a.shape[0], dtype=np.uint64)
    for i in range(a.shape[0]):
        out[i] = _clmul_reduce(a[i], b[i], poly, width)
    return out


@numba.njit(cache=True)
def _inv_clmul(a, poly, width):
    # a^(2^width - 2) by square-and-multiply
    r = np.uint64(1)
    e = (np.uint64(1) << np.uint64(width)) - np.uint64(2)
    while e:
        if e & np.uint64(1):
            r = _clmul_reduce(r, a, poly, width)
        a = _clmul_reduce(a, a, poly, width)
        e >>= np.uint64(1)
    return r


@numba.njit(cache=True)
def _solve_log(A, y, exp, log, q1):
    k = A.shape[0]
    for col in range(k):
        piv = -1
        for r in range(col, k):
            if A[r, col] != 0:
                piv = r
                break
        if piv < 0:
            return False
        if piv != col:
            for c in range(col, k):
                t = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = t
            t = y[col]
            y[col] = y[piv]
            y[piv] = t
        # normalize pivot row so its leading entry is 1
        ilog = q1 - log[A[col, col]]
        for c in range(col, k):
            v = A[col, c]
            if v != 0:
                A[col, c] = exp[log[v] + ilog]
        if y[col] != 0:
            y[col] = exp[log[y[col]] + ilog]
        for r in range(col + 1, k):
            f = A[r, col]
            if f == 0:
                continue
            lf = log[f]
            for c in range(col, k):
                v = A[col, c]
                if v != 0:
                    A[r, c] ^= exp[lf + log[v]]
            if y[col] != 0:
                y[r] ^= exp[lf + log[y[col]]]
    for col in range(k - 1, -1, -1):
        yc = y[col]
        if yc == 0:
            continue
        lyc = log[yc]
        for r in range(col):
            f = A[r, col]
            if f != 0:
                y[r] ^= exp[log[f] + lyc]
    return True


@numba.njit(inline="always")
def _nib_fill(f, T):
    """T[n] = f * n as carry-less products (unreduced), n < 16."""
    T[0] = np.uint64(0)
    for n in range(1, 16):
        if n & 1:
            T[n] = T[n - 1] ^ f
        else:
            T[n] = T[n >> 1] << np.uint64(1)


@numba.njit(inline="always")
def _nib_mul(T, x, width, poly_bits):
    """Reduced product of x with the factor tabulated in T."""
    p = np.uint64(0)
    sh = np.uint64(0)
    while x:
        p ^= T[x & np.uint64(15)] << sh
        x >>= np.uint64(4)
        sh += np.uint64(4)
    w = np.uint64(width)
    mask = (np.uint64(1) << w) - np.uint64(1)
    hi = p >> w
    while hi:
        p &= mask
        for j in poly_bits:
            p ^= hi << np.uint64(j)
        hi = p >> w
    return p


def poly_bit_positions(poly: int) -> np.ndarray:
    return np.array([j for j in range(poly.bit_length()) if poly >> j & 1], dtype=np.uint64)


@numba.njit(cache=True)
def _solve_clmul(A, y, poly, width, poly_bits):
    # A, y are uint64; each row update tabulates its factor once
    k = A.shape[0]
    T = np.empty(16, dtype=np.uint64)
    for col in range(k):
        piv = -1
        for r in range(col, k):
            if A[r, col] != 0:
                piv = r
                break
        if piv < 0:
            return False
        if piv != col:
            for c in range(col, k):
                t = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = t
            t = y[col]
            y[col] = y[piv]
            y[piv] = t
        _nib_fill(_inv_clmul(A[col, col], poly, width), T)
        for c in range(col, k):
            A[col, c] = _nib_mul(T, A[col, c], width, poly_bits)
        y[col] = _nib_mul(T, y[col], width, poly_bits)
        for r in range(col + 1, k):
            f = A[r, col]
            if f == 0:
                continue
            _nib_fill(f, T)
            for c in range(col, k):
                A[r, c] ^= _nib_mul(T, A[col, c], width, poly_bits)
            y[r] ^= _nib_mul(T, y[col], width, poly_bits)
    for col in range(k - 1, -1, -1):
        yc = y[col]
        if yc == 0:
            continue
        _nib_fill(yc, T)
        for r in range(col):
            f = A[r, col]
            if f != 0:
                y[r] ^= _nib_mul(T, f, width, poly_bits)
    return True


@numba.njit(cache=True)
def _rank_deficient_log(A, exp, log, q1):
    """Forward elimination only; True if A is singular.  A is clobbered."""
    k = A.shape[0]
    for col in range(k):
        piv = -1
        for r in range(col, k):
            if A[r, col] != 0:
                piv = r
                break
        if piv < 0:
            return True
        if piv != col:
            for c in range(col, k):
                t = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = t
        ilog = q1 - log[A[col, col]]
        for c in range(col, k):
            v = A[col, c]
            if v != 0:
                A[col, c] = exp[log[v] + ilog]
        for r in range(col + 1, k):
            f = A[r, col]
            if f == 0:
                continue
            lf = log[f]
            for c in range(col, k):
                v = A[col, c]
                if v != 0:
                    A[r, c] ^= exp[lf + log[v]]
    return False


@numba.njit(cache=True)
def _solve_tab(A, y, T, invt):
    k = A.shape[0]
    for col in range(k):
        piv = -1
        for r in range(col, k):
            if A[r, col] != 0:
                piv = r
                break
        if piv < 0:
            return False
        if piv != col:
            for c in range(col, k):
                t = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = t
            t = y[col]
            y[col] = y[piv]
            y[piv] = t
        Ti = T[invt[A[col, col]]]
        for c in range(col, k):
            A[col, c] = Ti[A[col, c]]
        y[col] = Ti[y[col]]
        for r in range(col + 1, k):
            f = A[r, col]
            if f == 0:
                continue
            Tf = T[f]
            for c in range(col, k):
                A[r, c] ^= Tf[A[col, c]]
            y[r] ^= Tf[y[col]]
    for col in range(k - 1, -1, -1):
        Ty = T[y[col]]
        for r in range(col):
            y[r] ^= Ty[A[r, col]]
    return True


@numba.njit(cache=True)
def _rank_deficient_tab(A, T, invt):
    k = A.shape[0]
    for col in range(k):
        piv = -1
        for r in range(col, k):
            if A[r, col] != 0:
                piv = r
                break
        if piv < 0:
            return True
        if piv != col:
            for c in range(col, k):
                t = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = t
        Ti = T[invt[A[col, col]]]
        for c in range(col, k):
            A[col, c] = Ti[A[col, c]]
        for r in range(col + 1, k):
            f = A[r, col]
            if f == 0:
                continue
            Tf = T[f]
            for c in range(col, k):
                A[r, c] ^= Tf[A[col, c]]
    return False

"""Seeded hash families used by the feedback codecs.

Two families are provided:

* ``universal_hash`` -- Dietzfelbinger's multiply-add-shift scheme with 128-bit
  multiplier and offset, which is strongly universal for 64-bit keys and any
  output width ``m <= 64``.
* ``prf_row`` -- a keyed splitmix64-style generator standing in for a fully
  random function ``[N] -> GF(2^b)^K``.

Every function comes in a scalar form on Python ints (the reference, used for
golden vectors) and a compiled array form for bulk work.  Both must agree
bit for bit.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .gf import FieldSpec

M64 = (1 << 64) - 1
M128 = (1 << 128) - 1
GOLDEN = 0x9E3779B97F4A7C15
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB
_OFFSET = 0x632BE59BD9B4E019

STREAM_PRF = 1
STREAM_UNIVERSAL = 0x100


def mix64(z: int) -> int:
    """splitmix64 finalizer (a bijection on 64-bit words)."""
    z &= M64
    z = ((z ^ (z >> 30)) * _C1) & M64
    z = ((z ^ (z >> 27)) * _C2) & M64
    return z ^ (z >> 31)


def _spread(v: int) -> int:
    return mix64(v * GOLDEN + _OFFSET)


def derive_key(seed: int, trial: int, stream: int) -> int:
    return mix64(mix64((seed & M64) ^ _spread(stream)) ^ _spread(trial))


def mix_seed(master: int, index: int) -> int:
    """Child seed for block ``index`` of a run seeded by ``master``."""
    return derive_key(master, index, 0xB10C)


@dataclass(frozen=True)
class HashSeed:
    """Protocol-wide seed plus the retry counter carried in LE messages."""

    seed: int
    trial: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= M64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.trial < 0:
            raise ValueError("trial must be non-negative")

    def key(self, stream: int) -> int:
        return derive_key(self.seed, self.trial, stream)

    def next_trial(self) -> "HashSeed":
        return HashSeed(self.seed, self.trial + 1)


@dataclass(frozen=True)
class HashFamilySpec:
    kind: str  # "universal" | "pseudorandom"
    domain: int
    out_bits: int

    def __post_init__(self):
        if self.kind not in ("universal", "pseudorandom"):
            raise ValueError(f"unknown hash family {self.kind!r}")
        if not 0 <= self.out_bits <= 64:
            raise ValueError("output range must be 2^m with 0 <= m <= 64")
        if not 1 <= self.domain <= 1 << 64:
            raise ValueError("domain must be in 1..2^64")

    @property
    def out_range(self) -> int:
        return 1 << self.out_bits


# --------------------------------------------------------------------------
# universal family
# --------------------------------------------------------------------------

def universal_params(seed: HashSeed, index: int = 0) -> tuple[int, int]:
    """128-bit multiplier and offset of hash function ``index``."""
    base = STREAM_UNIVERSAL + 4 * index
    w = [seed.key(base + j) for j in range(4)]
    return (w[0] << 64) | w[1], (w[2] << 64) | w[3]


def universal_hash(x: int, m: int, seed: HashSeed, index: int = 0) -> int:
    """Top ``m`` bits of ``(a*x + c) mod 2^128``; output in ``[0, 2^m)``."""
    if not 0 <= m <= 64:
        raise ValueError("m must be in 0..64")
    if m == 0:
        return 0
    a, c = universal_params(seed, index)
    return (((a * (x & M64) + c) & M128) >> (128 - m))


def universal_hash_array(xs, m: int, seed: HashSeed, index: int = 0) -> np.ndarray:
    if not 0 <= m <= 64:
        raise ValueError("m must be in 0..64")
    a, c = universal_params(seed, index)
    xs = np.ascontiguousarray(xs, dtype=np.uint64)
    return _universal_kernel(xs, np.uint64(a >> 64), np.uint64(a & M64),
                             np.uint64(c >> 64), np.uint64(c & M64), m)


def fastrange(h64: int, n: int) -> int:
    """Map a 64-bit hash onto ``[0, n)`` by multiply-high."""
    return (h64 * n) >> 64


def bloom_positions(xs, n_bits: int, n_hashes: int, seed: HashSeed) -> np.ndarray:
    """``(len(xs), T)`` array of bit positions in ``[0, n_bits)``."""
    xs = np.ascontiguousarray(xs, dtype=np.uint64)
    out = np.empty((len(xs), n_hashes), dtype=np.int64)
    for i in range(n_hashes):
        h = universal_hash_array(xs, 64, seed, i)
        out[:, i] = _fastrange_kernel(h, np.uint64(n_bits))
    return out


# --------------------------------------------------------------------------
# pseudorandom rows
# --------------------------------------------------------------------------

def prf_row(x: int, k: int, spec: FieldSpec, seed: HashSeed) -> np.ndarray:
    """Row of ``k`` field elements for identifier ``x`` (reference version)."""
    if k < 1:
        raise ValueError("K must be >= 1")
    u = mix64((x & M64) ^ seed.key(STREAM_PRF))
    shift = 64 - spec.b
    return np.array([mix64(u + (j + 1) * GOLDEN) >> shift for j in range(k)], dtype=np.int64)


def prf_rows(xs, k: int, b: int, seed: HashSeed) -> np.ndarray:
    """Rows for many identifiers at once, shape ``(len(xs), k)``."""
    if k < 1:
        raise ValueError("K must be >= 1")
    xs = np.ascontiguousarray(xs, dtype=np.uint64)
    return _prf_rows_kernel(xs, np.uint64(seed.key(STREAM_PRF)), k, b)


# --------------------------------------------------------------------------
# golden vectors
# --------------------------------------------------------------------------

GOLDEN_HEADER = ["kind", "input", "seed", "trial", "param", "expected"]


def golden_line(kind: str, x: int, seed: int, trial: int, param: str) -> list[str]:
    """Compute one golden record.

    ``kind`` is ``universal`` (param = output bits m) or ``prf`` (param =
    ``b:K``, expected = colon-separated row).
    """
    hs = HashSeed(seed, trial)
    if kind == "universal":
        expected = str(universal_hash(x, int(param), hs))
    elif kind == "prf":
        b, k = (int(v) for v in param.split(":"))
        expected = ":".join(str(int(v)) for v in prf_row(x, k, FieldSpec(b), hs))
    else:
        raise ValueError(f"unknown golden kind {kind!r}")
    return [kind, str(x), str(seed), str(trial), param, expected]


def write_golden(path, cases) -> None:
    """Write golden vectors for ``cases`` = iterable of (kind, x, seed, trial, param)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GOLDEN_HEADER)
        for case in cases:
            w.writerow(golden_line(*case))


def verify_golden(path) -> list[str]:
    """Return descriptions of records whose recomputed value differs."""
    bad = []
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            got = golden_line(row["kind"], int(row["input"]), int(row["seed"]),
                              int(row["trial"]), row["param"])[-1]
            if got != row["expected"]:
                bad.append(f"{row['kind']} x={row['input']}: {got} != {row['expected']}")
    return bad


# --------------------------------------------------------------------------
# compiled kernels
# --------------------------------------------------------------------------

_U1 = np.uint64(_C1)
_U2 = np.uint64(_C2)
_UG = np.uint64(GOLDEN)
_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


@numba.njit(inline="always")
def _mix64_u(z):
    z = (z ^ (z >> np.uint64(30))) * _U1
    z = (z ^ (z >> np.uint64(27))) * _U2
    return z ^ (z >> np.uint64(31))


@numba.njit(inline="always")
def _mul64(a, b):
    """Full 64x64 -> 128-bit product as (hi, lo)."""
    a_lo = a & _M32
    a_hi = a >> _S32
    b_lo = b & _M32
    b_hi = b >> _S32
    p0 = a_lo * b_lo
    p1 = a_lo * b_hi
    p2 = a_hi * b_lo
    p3 = a_hi * b_hi
    mid = (p0 >> _S32) + (p1 & _M32) + (p2 & _M32)
    lo = (p0 & _M32) | (mid << _S32)
    hi = p3 + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)
    return hi, lo


@numba.njit(inline="always")
def _universal_one(x, a1, a0, c1, c0, m):
    hi, lo = _mul64(a0, x)
    lo2 = lo + c0
    carry = np.uint64(1) if lo2 < lo else np.uint64(0)
    hi = hi + a1 * x + c1 + carry
    if m == 0:
        return np.uint64(0)
    return hi >> np.uint64(64 - m)


@numba.njit(cache=True)
def _universal_kernel(xs, a1, a0, c1, c0, m):
    out = np.empty(xs.shape[0], dtype=np.uint64)
    for i in range(xs.shape[0]):
        out[i] = _universal_one(xs[i], a1, a0, c1, c0, m)
    return out


@numba.njit(cache=True)
def _fastrange_kernel(h, n):
    out = np.empty(h.shape[0], dtype=np.int64)
    for i in range(h.shape[0]):
        hi, _ = _mul64(h[i], n)
        out[i] = np.int64(hi)
    return out


@numba.njit(cache=True)
def _prf_rows_kernel(xs, key, k, b):
    out = np.empty((xs.shape[0], k), dtype=np.int64)
    shift = np.uint64(64 - b)
    for i in range(xs.shape[0]):
        u = _mix64_u(xs[i] ^ key)
        for j in range(k):
            out[i, j] = np.int64(_mix64_u(u + np.uint64(j + 1) * _UG) >> shift)
    return out

"""Joint acknowledgment codecs.

Five ways to encode the set of decoded users ``S`` into one broadcast message:

=============  ==========================================================
``le``         solve ``H1 z = h2`` over GF(2^b); membership is one inner
               product check.  ``b = ceil(log2(1/eps_fp))``.
``bloom``      Bloom filter with ``T`` hashes over ``B`` bits.
``hashconcat`` ``b``-bit fingerprints of every member, concatenated.
``enumerative`` rank of ``S`` among all K-subsets of ``[N]`` (exact).
``naive``      identifiers concatenated; random subset if ``B`` is short.
=============  ==========================================================

Messages are bit-exact and MSB-first.  Frame layouts::

    le           | trial:4 | K:w | z_1 .. z_K (b bits each) |
    bloom        | B raw bits |
    hashconcat   | K:w | f_1 .. f_K (b bits each) |
    enumerative  | K:w | rank (ceil(log2 C(N,K)) bits) |
    naive        | K:w | id_1 .. id_K (id_bits each) |

with ``w = ceil(log2(K' + 1))`` for the provisioned maximum ``K'``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numba
import numpy as np

from . import gf
from ._mathutil import ceil_log2_comb, ceil_log2_int, log2_int
from .hashing import (
    STREAM_PRF, HashSeed, _mix64_u, _universal_one, _UG, bloom_positions, mix64,
    prf_rows, universal_hash_array, universal_params,
)

DEFAULT_SEED = 0x4D41535341524B31
TRIAL_BITS = 4
MAX_LE_WIDTH = gf.MAX_WIDTH


class Scheme(str, enum.Enum):
    LE = "le"
    BLOOM = "bloom"
    HASHCONCAT = "hashconcat"
    ENUMERATIVE = "enumerative"
    NAIVE = "naive"


class CodecError(Exception):
    pass


class CapacityExceeded(CodecError):
    pass


class EncodingFailed(CodecError):
    pass


class MalformedMessage(CodecError):
    pass


# --------------------------------------------------------------------------
# message-length formulas
# --------------------------------------------------------------------------

def le_width(eps_fp: float) -> int:
    """Field width ``ceil(log2(1/eps_fp))``."""
    if not 0 < eps_fp <= 1:
        raise ValueError("eps_fp must be in (0, 1]")
    return math.ceil(-math.log2(eps_fp))


def le_length(k: int, eps_fp: float) -> int:
    return k * le_width(eps_fp)


def bloom_length(k: int, eps_fp: float) -> float:
    """``K log2(e) log2(1/eps_fp)`` bits (not rounded)."""
    return k * math.log2(math.e) * -math.log2(eps_fp)


def bloom_hashes(bits: int, k: int) -> int:
    """Number of hash functions ``round((B/K) ln 2)``, at least one."""
    return max(1, round(bits / k * math.log(2))) if k > 0 else 1


def hashconcat_width(eps_fp: float, k: int) -> int:
    """Fingerprint width ``ceil(-log2(1 - (1 - eps_fp)^(1/K)))``."""
    if not 0 < eps_fp < 1:
        raise ValueError("eps_fp must be in (0, 1)")
    k = max(k, 1)
    per_member = -math.expm1(math.log1p(-eps_fp) / k)
    return math.ceil(-math.log2(per_member))


def hashconcat_length(k: int, eps_fp: float) -> int:
    return k * hashconcat_width(eps_fp, k)


def hashconcat_length_relaxed(k: int, eps_fp: float) -> int:
    """Lower-bounding form ``K ceil(log2(1/eps) + log2(K (1 - eps)))``."""
    return k * math.ceil(-math.log2(eps_fp) + math.log2(k * (1 - eps_fp)))


def k_field_bits(k_max: int) -> int:
    return ceil_log2_int(k_max + 1)


# --------------------------------------------------------------------------
# false-positive expectations
# --------------------------------------------------------------------------

def bloom_fp_classic(bits: int, k: int, hashes: int) -> float:
    """``(1 - (1 - 1/B)^{KT})^T``; ignores the dependence between bits."""
    return (1.0 - (1.0 - 1.0 / bits) ** (k * hashes)) ** hashes


def bloom_fp_rounded(bits: int, k: int) -> float:
    """Rule of thumb ``2^-ceil((B/K) ln 2 + 0.5)``."""
    return 2.0 ** -math.ceil(bits / k * math.log(2) + 0.5)


def bloom_fp_exact(bits: int, k: int, hashes: int) -> float:
    """Expected false-positive rate of a Bloom filter with independent hashes.

    A probe hits ``j`` distinct positions with probability
    ``S(T, j) B^(j falling) / B^T``; all ``j`` are set with probability
    ``sum_i (-1)^i C(j, i) (1 - i/B)^{KT}``.
    """
    if k == 0:
        return 0.0
    throws = k * hashes
    stirling = _stirling2_row(hashes)
    total = 0.0
    for j in range(1, hashes + 1):
        if j > bits:
            break
        # probability that T probe hashes cover exactly j distinct positions
        log_fall = sum(math.log(bits - i) for i in range(j)) - hashes * math.log(bits)
        pj = stirling[j] * math.exp(log_fall)
        all_set = math.fsum((-1) ** i * math.comb(j, i) * (1.0 - i / bits) ** throws
                            for i in range(j + 1))
        total += pj * all_set
    return total


def _stirling2_row(n: int) -> list[int]:
    row = [1] + [0] * n
    for m in range(1, n + 1):
        new = [0] * (n + 1)
        for j in range(1, m + 1):
            new[j] = j * row[j] + row[j - 1]
        row = new
    return row


@lru_cache(maxsize=None)
def ef_capacity(n: int, bits: int) -> int:
    """Largest k with ``ceil(log2 C(n, k)) <= bits``."""
    # C(n, k) grows with k up to n/2; exponential then binary search
    lo, hi = 0, 1
    while hi <= n // 2 and ceil_log2_comb(n, hi) <= bits:
        lo, hi = hi, hi * 2
    hi = min(hi, n // 2 + 1)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ceil_log2_comb(n, mid) <= bits:
            lo = mid
        else:
            hi = mid
    return lo


def hashconcat_fp(width: int, k: int) -> float:
    return -math.expm1(k * math.log1p(-(2.0 ** -width))) if k else 0.0


# --------------------------------------------------------------------------
# data types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DecodedSet:
    """Sorted, duplicate-free identifiers out of a population of size ``n``."""

    n: int
    members: tuple[int, ...]

    def __post_init__(self):
        if not 1 <= self.n <= 1 << 64:
            raise ValueError("population size must be in 1..2^64")
        m = self.members
        if any(b <= a for a, b in zip(m, m[1:])):
            raise ValueError("members must be strictly increasing")
        if m and (m[0] < 0 or m[-1] >= self.n):
            raise ValueError("members must lie in [0, n)")

    @property
    def k(self) -> int:
        return len(self.members)

    @classmethod
    def of(cls, n: int, ids) -> "DecodedSet":
        ids = sorted(int(i) for i in ids)
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate identifiers")
        return cls(n, tuple(ids))

    @classmethod
    def random(cls, n: int, k: int, rng: np.random.Generator) -> "DecodedSet":
        """Uniform K-subset of ``[n]``."""
        return cls(n, tuple(int(v) for v in sample_ids(n, k, rng)))

    def as_array(self) -> np.ndarray:
        return np.array(self.members, dtype=np.uint64)

    def __contains__(self, x) -> bool:
        return int(x) in set(self.members)


def sample_ids(n: int, k: int, rng: np.random.Generator, exclude=None) -> np.ndarray:
    """``k`` distinct uniform identifiers in ``[0, n)`` as sorted uint64."""
    if k > n:
        raise ValueError("cannot draw more identifiers than the population")
    if n <= 4 * k + 64 or n <= 1 << 16:
        pool = np.arange(n, dtype=np.uint64)
        if exclude is not None and len(exclude):
            pool = np.setdiff1d(pool, np.asarray(exclude, dtype=np.uint64))
        if k > len(pool):
            raise ValueError("not enough identifiers outside the exclusion set")
        return np.sort(rng.choice(pool, size=k, replace=False))
    excl = None if exclude is None else np.asarray(exclude, dtype=np.uint64)
    have = np.empty(0, dtype=np.uint64)
    while len(have) < k:
        need = k - len(have)
        draw = rng.integers(0, n, size=need + 8, dtype=np.uint64, endpoint=False)
        have = np.unique(np.concatenate([have, draw]))
        if excl is not None and len(excl):
            have = have[~np.isin(have, excl)]
    if len(have) > k:
        have = np.sort(rng.choice(have, size=k, replace=False))
    return have


def drop_excess(s: DecodedSet, k_max: int, rng: np.random.Generator) -> DecodedSet:
    """Keep a uniformly random ``k_max``-subset when ``K > K'``."""
    if s.k <= k_max:
        return s
    keep = rng.choice(s.k, size=k_max, replace=False)
    return DecodedSet(s.n, tuple(sorted(s.members[i] for i in keep)))


@dataclass(frozen=True)
class SchemeConfig:
    """Parameters shared out of band by the base station and the users.

    ``bits`` is a fixed payload budget ``B``; ``width`` the per-element bit
    width (LE field width, fingerprint width or identifier width).  Use the
    classmethod constructors rather than filling fields by hand.
    """

    scheme: Scheme
    n: int = 1 << 32
    k_max: int = 1023
    eps_fp: float | None = None
    bits: int | None = None
    width: int | None = None
    hashes: int | None = None
    seed: int = DEFAULT_SEED
    max_trials: int = 1 << TRIAL_BITS

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.k_max < 0:
            raise ValueError("k_max must be non-negative")
        if self.max_trials > 1 << TRIAL_BITS:
            raise ValueError(f"at most {1 << TRIAL_BITS} trials fit the header")

    # constructors ---------------------------------------------------------

    @classmethod
    def le(cls, eps_fp: float, k_max: int = 1023, **kw) -> "SchemeConfig":
        w = le_width(eps_fp)
        if w > MAX_LE_WIDTH:
            raise ValueError(f"eps_fp too small: needs GF(2^{w})")
        return cls(Scheme.LE, k_max=k_max, eps_fp=eps_fp, width=w, **kw)

    @classmethod
    def le_fixed(cls, bits: int, k_max: int = 1023, **kw) -> "SchemeConfig":
        """LE with a fixed payload budget; width ``min(floor(B/K), 32)``."""
        return cls(Scheme.LE, k_max=k_max, bits=bits, **kw)

    @classmethod
    def bloom(cls, bits: int, k_design: int | None = None, hashes: int | None = None,
              **kw) -> "SchemeConfig":
        if hashes is None:
            if k_design is None:
                raise ValueError("give either hashes or the design K")
            hashes = bloom_hashes(bits, k_design)
        return cls(Scheme.BLOOM, bits=bits, hashes=hashes, **kw)

    @classmethod
    def bloom_for(cls, eps_fp: float, k: int, **kw) -> "SchemeConfig":
        bits = math.ceil(bloom_length(k, eps_fp))
        return cls.bloom(bits, k_design=k, eps_fp=eps_fp, **kw)

    @classmethod
    def hashconcat(cls, eps_fp: float, k: int, **kw) -> "SchemeConfig":
        w = hashconcat_width(eps_fp, k)
        if w > 64:
            raise ValueError("fingerprints wider than 64 bits are not supported")
        return cls(Scheme.HASHCONCAT, k_max=k, eps_fp=eps_fp, width=w, bits=k * w, **kw)

    @classmethod
    def enumerative(cls, n: int = 1 << 32, k_max: int = 1023, **kw) -> "SchemeConfig":
        return cls(Scheme.ENUMERATIVE, n=n, k_max=k_max, eps_fp=0.0, **kw)

    @classmethod
    def naive(cls, bits: int | None = None, k_max: int = 1023, id_bits: int = 32,
              **kw) -> "SchemeConfig":
        kw.setdefault("n", 1 << id_bits)
        return cls(Scheme.NAIVE, k_max=k_max, bits=bits, width=id_bits, **kw)

    # derived quantities ---------------------------------------------------

    @property
    def k_bits(self) -> int:
        return k_field_bits(self.k_max)

    def le_width_for(self, k: int) -> int:
        if self.width is not None:
            return self.width
        if self.bits is None:
            raise ValueError("LE config needs eps_fp or bits")
        return min(self.bits // k, MAX_LE_WIDTH) if k else 0

    def naive_capacity(self) -> int:
        """Identifiers that fit: ``ceil(B / id_bits)`` (unbounded without B)."""
        if self.bits is None:
            return self.k_max
        return min(self.k_max, -(-self.bits // self.width))

    def capacity(self) -> int:
        if self.scheme is Scheme.HASHCONCAT:
            return min(self.k_max, self.bits // self.width)
        if self.scheme is Scheme.BLOOM:
            return 1 << 62
        if self.scheme is Scheme.NAIVE:
            return self.naive_capacity()
        if self.scheme is Scheme.ENUMERATIVE and self.bits is not None:
            return min(self.k_max, ef_capacity(self.n, self.bits))
        return self.k_max

    def payload_bits(self, k: int) -> int:
        """Payload length for a message acknowledging ``k`` users."""
        s = self.scheme
        if s is Scheme.LE:
            return k * self.le_width_for(k)
        if s is Scheme.BLOOM:
            return self.bits
        if s is Scheme.HASHCONCAT:
            return k * self.width
        if s is Scheme.ENUMERATIVE:
            return ceil_log2_comb(self.n, k)
        return k * self.width

    def header_bits(self) -> int:
        s = self.scheme
        if s is Scheme.LE:
            return TRIAL_BITS + self.k_bits
        if s is Scheme.BLOOM:
            return 0
        return self.k_bits

    def expected_fp(self, k: int) -> float:
        """Analytic false-positive probability with ``k`` acknowledged users."""
        if k == 0:
            return 0.0
        s = self.scheme
        if s is Scheme.LE:
            return 2.0 ** -self.le_width_for(k)
        if s is Scheme.BLOOM:
            return bloom_fp_exact(self.bits, k, self.hashes)
        if s is Scheme.HASHCONCAT:
            return hashconcat_fp(self.width, min(k, self.capacity()))
        return 0.0

    def expected_fn(self, k: int) -> float:
        """False negatives from capacity limits (users dropped at random)."""
        if k == 0:
            return 0.0
        cap = self.capacity()
        return 0.0 if k <= cap else 1.0 - cap / k


@dataclass(frozen=True)
class FeedbackMessage:
    """Encoded acknowledgment; ``payload`` holds ``payload_bits`` bits MSB-first."""

    scheme: Scheme
    payload: int
    payload_bits: int
    k: int | None = None
    trial: int | None = None

    def __post_init__(self):
        if self.payload < 0 or self.payload >> self.payload_bits:
            raise MalformedMessage("payload does not fit its declared length")

    def frame(self, cfg: SchemeConfig) -> tuple[int, int]:
        """Bit-exact frame as ``(value, n_bits)``."""
        w = BitWriter()
        if self.scheme is Scheme.LE:
            w.write(self.trial, TRIAL_BITS)
        if self.scheme is not Scheme.BLOOM:
            w.write(self.k, cfg.k_bits)
        w.write(self.payload, self.payload_bits)
        return w.value, w.n_bits

    @classmethod
    def from_frame(cls, cfg: SchemeConfig, value: int, n_bits: int) -> "FeedbackMessage":
        r = BitReader(value, n_bits)
        trial = k = None
        try:
            if cfg.scheme is Scheme.LE:
                trial = r.read(TRIAL_BITS)
            if cfg.scheme is not Scheme.BLOOM:
                k = r.read(cfg.k_bits)
            length = cfg.payload_bits(k if k is not None else 0)
            payload = r.read(length)
        except EOFError as exc:
            raise MalformedMessage(str(exc)) from None
        if r.remaining:
            raise MalformedMessage(f"{r.remaining} trailing bits")
        return cls(cfg.scheme, payload, length, k, trial)

    def payload_hex(self) -> str:
        n_bytes = -(-self.payload_bits // 8)
        pad = 8 * n_bytes - self.payload_bits
        return (self.payload << pad).to_bytes(n_bytes, "big").hex()

    def hex_line(self, cfg: SchemeConfig) -> str:
        """``scheme,N,K,seed,trial,hex(payload)``."""
        k = "" if self.k is None else self.k
        trial = "" if self.trial is None else self.trial
        return f"{self.scheme.value},{cfg.n},{k},{cfg.seed},{trial},{self.payload_hex()}"

    @classmethod
    def from_hex_line(cls, line: str, cfg: SchemeConfig) -> "FeedbackMessage":
        scheme, n, k, seed, trial, hx = line.strip().split(",")
        if Scheme(scheme) is not cfg.scheme or int(n) != cfg.n or int(seed) != cfg.seed:
            raise MalformedMessage("hex line does not match the configuration")
        k = int(k) if k else None
        length = cfg.payload_bits(k if k is not None else 0)
        n_bytes = -(-length // 8)
        raw = bytes.fromhex(hx)
        if len(raw) != n_bytes:
            raise MalformedMessage("payload length mismatch")
        payload = int.from_bytes(raw, "big") >> (8 * n_bytes - length)
        return cls(cfg.scheme, payload, length, k, int(trial) if trial else None)


class BitWriter:
    def __init__(self):
        self.value = 0
        self.n_bits = 0

    def write(self, v: int, width: int) -> None:
        if width == 0:
            return
        if v < 0 or v >> width:
            raise ValueError(f"{v} does not fit in {width} bits")
        self.value = (self.value << width) | v
        self.n_bits += width


class BitReader:
    def __init__(self, value: int, n_bits: int):
        self.value = value
        self.remaining = n_bits

    def read(self, width: int) -> int:
        if width > self.remaining:
            raise EOFError(f"need {width} bits, {self.remaining} left")
        self.remaining -= width
        return (self.value >> self.remaining) & ((1 << width) - 1)


def pack_fields(values, width: int) -> int:
    out = 0
    for v in values:
        out = (out << width) | int(v)
    return out


def unpack_fields(payload: int, count: int, width: int) -> np.ndarray:
    mask = (1 << width) - 1
    vals = [(payload >> (width * (count - 1 - i))) & mask for i in range(count)]
    return np.array(vals, dtype=np.uint64 if width > 63 else np.int64)


def _check_length(msg: FeedbackMessage, cfg: SchemeConfig) -> None:
    if msg.scheme is not cfg.scheme:
        raise MalformedMessage(f"{msg.scheme.value} message given to {cfg.scheme.value} decoder")
    expect = cfg.payload_bits(msg.k if msg.k is not None else 0)
    if msg.payload_bits != expect:
        raise MalformedMessage(f"payload has {msg.payload_bits} bits, expected {expect}")


# --------------------------------------------------------------------------
# linear equations
# --------------------------------------------------------------------------

def encode_le(s: DecodedSet, cfg: SchemeConfig) -> FeedbackMessage:
    if s.k > cfg.k_max:
        raise CapacityExceeded(f"K={s.k} exceeds K'={cfg.k_max}")
    k = s.k
    b = cfg.le_width_for(k)
    if k == 0 or b == 0:
        return FeedbackMessage(Scheme.LE, 0, 0, k, 0)
    spec = gf.field_spec(b)
    ids = s.as_array()
    for trial in range(cfg.max_trials):
        z = _le_solution(ids, b, spec, HashSeed(cfg.seed, trial))
        if z is not None:
            return FeedbackMessage(Scheme.LE, pack_fields(z, b), k * b, k, trial)
    raise EncodingFailed(f"H1 singular in all {cfg.max_trials} trials")


def _le_solution(ids, b, spec, hs):
    H = prf_rows(ids, len(ids), b, hs)
    y = universal_hash_array(ids, b, hs).astype(np.int64)
    try:
        return gf.solve(H, y, spec)
    except gf.SingularMatrix:
        return None


def le_singular_count(k: int, b: int, n_encodes: int, rng: np.random.Generator,
                      n: int = 1 << 32, seed: int = DEFAULT_SEED, chunk: int = 2000) -> int:
    """How many of ``n_encodes`` random K-sets give a singular H1 at trial 0."""
    spec = gf.field_spec(b)
    hs = HashSeed(seed, 0)
    count = 0
    done = 0
    while done < n_encodes:
        m = min(chunk, n_encodes - done)
        ids = np.stack([sample_ids(n, k, rng) for _ in range(m)]) if n <= 1 << 20 \
            else _distinct_rows(rng, m, k, n)
        if b <= gf.FULL_TABLE_WIDTH:
            count += int(_count_singular_tab(ids, np.uint64(hs.key(STREAM_PRF)), b,
                                             spec.mul_table, spec.inv_table.astype(np.uint8)))
        else:
            count += sum(gf.is_singular(prf_rows(row, k, b, hs), spec) for row in ids)
        done += m
    return count


def _distinct_rows(rng, m, k, n):
    ids = rng.integers(0, n, size=(m, k), dtype=np.uint64)
    srt = np.sort(ids, axis=1)
    bad = np.nonzero((srt[:, 1:] == srt[:, :-1]).any(axis=1))[0]
    for i in bad:
        ids[i] = sample_ids(n, k, rng)
    return ids


@numba.njit(cache=True)
def _count_singular_tab(ids, key, b, T, invt):
    m, k = ids.shape
    shift = np.uint64(64 - b)
    A = np.empty((k, k), dtype=np.uint8)
    count = 0
    for e in range(m):
        for i in range(k):
            u = _mix64_u(ids[e, i] ^ key)
            for j in range(k):
                A[i, j] = np.uint8(_mix64_u(u + np.uint64(j + 1) * _UG) >> shift)
        if gf._rank_deficient_tab(A, T, invt):
            count += 1
    return count


def decode_le_many(msg: FeedbackMessage, ids, cfg: SchemeConfig) -> np.ndarray:
    _check_length(msg, cfg)
    ids = np.ascontiguousarray(ids, dtype=np.uint64)
    k = msg.k
    if k == 0:
        return np.zeros(len(ids), dtype=bool)
    b = cfg.le_width_for(k)
    if b == 0:
        return np.ones(len(ids), dtype=bool)
    z = unpack_fields(msg.payload, k, b)
    hs = HashSeed(cfg.seed, msg.trial)
    key = np.uint64(hs.key(STREAM_PRF))
    a, c = universal_params(hs, 0)
    ua = (np.uint64(a >> 64), np.uint64(a & (2**64 - 1)), np.uint64(c >> 64),
          np.uint64(c & (2**64 - 1)))
    spec = gf.field_spec(b)
    if spec.has_tables:
        logz = spec.log_table[z]
        return _le_check_log(ids, key, z, logz, spec.exp_table, spec.log_table, b, *ua)
    return _le_check_clmul(ids, key, z.astype(np.uint64),
                           gf.poly_bit_positions(spec.reduction_poly), b, *ua)


@numba.njit(cache=True)
def _le_check_log(ids, key, z, logz, exp, log, b, a1, a0, c1, c0):
    out = np.empty(ids.shape[0], dtype=np.bool_)
    shift = np.uint64(64 - b)
    k = z.shape[0]
    for i in range(ids.shape[0]):
        x = ids[i]
        u = _mix64_u(x ^ key)
        acc = 0
        for j in range(k):
            if z[j] == 0:
                continue
            r = np.int64(_mix64_u(u + np.uint64(j + 1) * _UG) >> shift)
            if r != 0:
                acc ^= exp[log[r] + logz[j]]
        out[i] = acc == np.int64(_universal_one(x, a1, a0, c1, c0, b))
    return out


@numba.njit(cache=True)
def _le_check_clmul(ids, key, z, poly_bits, b, a1, a0, c1, c0):
    out = np.empty(ids.shape[0], dtype=np.bool_)
    shift = np.uint64(64 - b)
    k = z.shape[0]
    tabs = np.empty((k, 16), dtype=np.uint64)
    for j in range(k):
        gf._nib_fill(z[j], tabs[j])
    for i in range(ids.shape[0]):
        x = ids[i]
        u = _mix64_u(x ^ key)
        acc = np.uint64(0)
        for j in range(k):
            r = _mix64_u(u + np.uint64(j + 1) * _UG) >> shift
            acc ^= gf._nib_mul(tabs[j], r, b, poly_bits)
        out[i] = acc == _universal_one(x, a1, a0, c1, c0, b)
    return out


# --------------------------------------------------------------------------
# Bloom filter
# --------------------------------------------------------------------------

def encode_bloom(s: DecodedSet, cfg: SchemeConfig) -> FeedbackMessage:
    bits = np.zeros(cfg.bits, dtype=bool)
    if s.k:
        pos = bloom_positions(s.as_array(), cfg.bits, cfg.hashes, HashSeed(cfg.seed))
        bits[pos.ravel()] = True
    return FeedbackMessage(Scheme.BLOOM, _bits_to_int(bits), cfg.bits, None, None)


def decode_bloom_many(msg: FeedbackMessage, ids, cfg: SchemeConfig) -> np.ndarray:
    _check_length(msg, cfg)
    bits = _int_to_bits(msg.payload, msg.payload_bits)
    pos = bloom_positions(np.asarray(ids, dtype=np.uint64), cfg.bits, cfg.hashes,
                          HashSeed(cfg.seed))
    return bits[pos].all(axis=1)


def _bits_to_int(bits: np.ndarray) -> int:
    if not len(bits):
        return 0
    pad = (-len(bits)) % 8
    raw = np.packbits(bits).tobytes()
    return int.from_bytes(raw, "big") >> pad


def _int_to_bits(value: int, n_bits: int) -> np.ndarray:
    if n_bits == 0:
        return np.zeros(0, dtype=bool)
    n_bytes = -(-n_bits // 8)
    raw = (value << (8 * n_bytes - n_bits)).to_bytes(n_bytes, "big")
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:n_bits].astype(bool)


# --------------------------------------------------------------------------
# hash concatenation
# --------------------------------------------------------------------------

def encode_hashconcat(s: DecodedSet, cfg: SchemeConfig) -> FeedbackMessage:
    if s.k > cfg.capacity():
        raise CapacityExceeded(f"K={s.k} exceeds B/b={cfg.capacity()}")
    fp = universal_hash_array(s.as_array(), cfg.width, HashSeed(cfg.seed))
    return FeedbackMessage(Scheme.HASHCONCAT, pack_fields(fp, cfg.width), s.k * cfg.width,
                           s.k, None)


def decode_hashconcat_many(msg: FeedbackMessage, ids, cfg: SchemeConfig) -> np.ndarray:
    _check_length(msg, cfg)
    stored = unpack_fields(msg.payload, msg.k, cfg.width).astype(np.uint64)
    probe = universal_hash_array(np.asarray(ids, dtype=np.uint64), cfg.width,
                                 HashSeed(cfg.seed))
    return np.isin(probe, stored)


# --------------------------------------------------------------------------
# enumerative coding
# --------------------------------------------------------------------------

def rank_subset(members) -> int:
    """Colexicographic rank ``sum_i C(s_i, i)`` of a sorted subset (1-based i)."""
    return sum(math.comb(int(s), i) for i, s in enumerate(members, start=1))


def unrank_subset(rank: int, k: int, n: int) -> tuple[int, ...]:
    """Inverse of :func:`rank_subset` over the K-subsets of ``[n]``."""
    if not 0 <= rank < math.comb(n, k):
        raise ValueError("rank out of range")
    out = []
    hi = n - 1
    for i in range(k, 0, -1):
        c, v = _largest_comb_below(rank, i, hi)
        out.append(c)
        rank -= v
        hi = c - 1
    return tuple(reversed(out))


def _largest_comb_below(rank: int, i: int, hi: int) -> int:
    """Largest ``c`` in ``[i-1, hi]`` with ``C(c, i) <= rank``, and ``C(c, i)``."""
    if rank == 0:
        return i - 1, 0
    # C(c, i) ~ (c - (i-1)/2)^i / i!, good to a few units when c >> i
    lg = (log2_int(rank) + math.lgamma(i + 1) / math.log(2)) / i
    c = hi if lg > 1000 else int(min(max(2.0 ** lg + (i - 1) / 2, i - 1), hi))
    v = math.comb(c, i)
    for _ in range(64):
        if v > rank:
            # C(c-1, i) = C(c, i) (c - i) / c
            v = v * (c - i) // c
            c -= 1
            continue
        if c == hi:
            return c, v
        nxt = v * (c + 1) // (c + 1 - i) if c + 1 > i else 1
        if nxt > rank:
            return c, v
        c, v = c + 1, nxt
    # poor estimate (c close to i); fall back to bisection
    c = _bisect_comb(rank, i, i - 1, hi)
    return c, math.comb(c, i)


def _bisect_comb(rank: int, i: int, lo: int, hi: int) -> int:
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if math.comb(mid, i) <= rank:
            lo = mid
        else:
            hi = mid - 1
    return lo


def encode_enumerative(s: DecodedSet, cfg: SchemeConfig | None = None) -> FeedbackMessage:
    cfg = cfg or SchemeConfig.enumerative(s.n, max(s.k, 1))
    if s.k > cfg.k_max:
        raise CapacityExceeded(f"K={s.k} exceeds K'={cfg.k_max}")
    if s.n != cfg.n:
        raise ValueError("set and configuration disagree on N")
    return FeedbackMessage(Scheme.ENUMERATIVE, rank_subset(s.members),
                           ceil_log2_comb(s.n, s.k), s.k, None)


def decode_enumerative(msg: FeedbackMessage, cfg: SchemeConfig) -> DecodedSet:
    _check_length(msg, cfg)
    if msg.payload >= math.comb(cfg.n, msg.k):
        raise MalformedMessage("rank exceeds C(N, K)")
    return DecodedSet(cfg.n, unrank_subset(msg.payload, msg.k, cfg.n))


# --------------------------------------------------------------------------
# identifier concatenation
# --------------------------------------------------------------------------

def encode_naive(s: DecodedSet, cfg: SchemeConfig) -> FeedbackMessage:
    if s.n > 1 << cfg.width:
        raise ValueError(f"identifiers do not fit in {cfg.width} bits")
    cap = cfg.naive_capacity()
    members = s.members
    if s.k > cap:
        if cfg.bits is None:
            raise CapacityExceeded(f"K={s.k} exceeds K'={cfg.k_max}")
        # B is short: keep a random subset, reproducible from the set itself
        rng = np.random.default_rng([cfg.seed, *members])
        keep = np.sort(rng.choice(s.k, size=cap, replace=False))
        members = tuple(members[i] for i in keep)
    return FeedbackMessage(Scheme.NAIVE, pack_fields(members, cfg.width),
                           len(members) * cfg.width, len(members), None)


def decode_naive_many(msg: FeedbackMessage, ids, cfg: SchemeConfig) -> np.ndarray:
    _check_length(msg, cfg)
    stored = unpack_fields(msg.payload, msg.k, cfg.width).astype(np.uint64)
    return np.isin(np.asarray(ids, dtype=np.uint64), stored)


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

_ENCODERS = {
    Scheme.LE: encode_le,
    Scheme.BLOOM: encode_bloom,
    Scheme.HASHCONCAT: encode_hashconcat,
    Scheme.ENUMERATIVE: encode_enumerative,
    Scheme.NAIVE: encode_naive,
}


def encode(s: DecodedSet, cfg: SchemeConfig) -> FeedbackMessage:
    return _ENCODERS[cfg.scheme](s, cfg)


def decode_many(msg: FeedbackMessage | None, ids, cfg: SchemeConfig) -> np.ndarray:
    """Membership decisions for many identifiers; ``None`` means erasure."""
    ids = np.asarray(ids, dtype=np.uint64)
    if msg is None:
        return np.zeros(len(ids), dtype=bool)
    s = cfg.scheme
    if s is Scheme.LE:
        return decode_le_many(msg, ids, cfg)
    if s is Scheme.BLOOM:
        return decode_bloom_many(msg, ids, cfg)
    if s is Scheme.HASHCONCAT:
        return decode_hashconcat_many(msg, ids, cfg)
    if s is Scheme.ENUMERATIVE:
        members = decode_enumerative(msg, cfg).as_array()
        return np.isin(ids, members)
    return decode_naive_many(msg, ids, cfg)


def decode(msg: FeedbackMessage | None, x: int, cfg: SchemeConfig) -> bool:
    """Decision of user ``x``: True if it believes it was acknowledged."""
    return bool(decode_many(msg, np.array([x], dtype=np.uint64), cfg)[0])


decode_le = decode
decode_bloom = decode
decode_hashconcat = decode
decode_naive = decode


def with_seed(cfg: SchemeConfig, seed: int) -> SchemeConfig:
    return replace(cfg, seed=seed)

"""L-round ARQ reliability with imperfect joint acknowledgments.

Per round a user is decoded by the BS with probability ``1 - eps_ul`` and then
reads the broadcast feedback, which is erased with probability ``eps_dl``.
A decoded user reads a false negative with probability ``eps_fn`` and an
undecoded one a false positive with probability ``eps_fp``.  The user stops
at the first positive acknowledgment; it succeeds only when that
acknowledgment belongs to a round in which it was actually decoded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._mathutil import gammainc_int, poisson_support
from .bounds import DomainError, Unachievable
from .codec import bloom_fp_exact, bloom_hashes, ef_capacity

ID_BITS = 32
LE_MAX_WIDTH = 32


@dataclass(frozen=True)
class ArqParams:
    eps_ul: float
    eps_dl: float = 0.0
    eps_fp: float = 0.0
    eps_fn: float = 0.0
    rounds: int = 1

    def __post_init__(self):
        for name in ("eps_ul", "eps_dl", "eps_fp", "eps_fn"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name}={v} is not a probability")
        if self.rounds < 1:
            raise DomainError("need at least one round")

    @property
    def fb_s(self) -> float:
        """Wrong decision after an uplink success (erasure or false negative)."""
        return 1.0 - (1.0 - self.eps_dl) * (1.0 - self.eps_fn)

    @property
    def fb_f(self) -> float:
        """Wrong decision after an uplink failure (false positive)."""
        return (1.0 - self.eps_dl) * self.eps_fp

    @property
    def ell(self) -> float:
        """Probability of moving on to the next round."""
        return self.eps_ul * (1.0 - self.fb_f) + (1.0 - self.eps_ul) * self.fb_s

    def with_rounds(self, rounds: int) -> "ArqParams":
        return ArqParams(self.eps_ul, self.eps_dl, self.eps_fp, self.eps_fn, rounds)


def pr_fail_array(eps_ul, eps_dl, eps_fp, eps_fn, rounds):
    """Vectorised failure probability after ``rounds`` rounds.

    Written as ``(eps_ul fb_f + A ell^L) / (eps_ul fb_f + A)`` with
    ``A = (1 - eps_ul)(1 - fb_s)``, which avoids ``1 - ell`` cancellation.
    """
    eps_ul, eps_dl, eps_fp, eps_fn = np.broadcast_arrays(
        *(np.asarray(v, dtype=np.float64) for v in (eps_ul, eps_dl, eps_fp, eps_fn)))
    ok_dl = 1.0 - eps_dl
    a = (1.0 - eps_ul) * ok_dl * (1.0 - eps_fn)
    f = eps_ul * ok_dl * eps_fp
    ell = eps_ul * (1.0 - ok_dl * eps_fp) + (1.0 - eps_ul) * (1.0 - ok_dl * (1.0 - eps_fn))
    den = f + a
    num = f + a * ell ** rounds
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0)
    return np.clip(out, 0.0, 1.0)


def pr_fail(p: ArqParams) -> float:
    return float(pr_fail_array(p.eps_ul, p.eps_dl, p.eps_fp, p.eps_fn, p.rounds))


def pr_fail_sum(p: ArqParams) -> float:
    """``1 - sum_l ell^(l-1) (1 - eps_ul)(1 - fb_s)``, term by term."""
    a = (1.0 - p.eps_ul) * (1.0 - p.fb_s)
    return 1.0 - math.fsum(a * p.ell ** i for i in range(p.rounds))


def pr_fail_onetx(eps_ul: float, eps_dl: float, eps_fn: float = 0.0) -> float:
    return 1.0 - (1.0 - eps_ul) * (1.0 - eps_dl) * (1.0 - eps_fn)


def pr_fail_limit(p: ArqParams) -> float:
    """Failure probability as ``L -> inf``; does not depend on ``eps_dl``."""
    good = (1.0 - p.eps_ul) * (1.0 - p.eps_fn)
    bad = p.eps_ul * p.eps_fp
    if good + bad == 0.0:
        return 1.0
    return bad / (good + bad)


def pr_fail_limit_nofn(eps_ul: float, eps_fp: float) -> float:
    return 1.0 - (1.0 - eps_ul) / (1.0 - eps_ul * (1.0 - eps_fp))


def required_rounds(p: ArqParams, eps_fail: float) -> int:
    """Smallest L with ``pr_fail <= eps_fail`` (``p.rounds`` is ignored)."""
    if not 0.0 <= eps_fail <= 1.0:
        raise DomainError("target must be a probability")
    one = p.with_rounds(1)
    if pr_fail(one) <= eps_fail:
        return 1
    limit = pr_fail_limit(p)
    if eps_fail <= limit or p.ell == 0.0:
        raise Unachievable(f"target {eps_fail:g} not above the L->inf floor {limit:g}")
    a = (1.0 - p.eps_ul) * (1.0 - p.fb_s)
    ratio = (eps_fail * (1.0 - p.ell) - p.eps_ul * p.fb_f) / a
    est = max(1, math.ceil(math.log(ratio) / math.log(p.ell)))
    # the closed form can be off by one after rounding; settle on the exact L
    while est > 1 and pr_fail(p.with_rounds(est - 1)) <= eps_fail:
        est -= 1
    while pr_fail(p.with_rounds(est)) > eps_fail:
        est += 1
    return est


def required_rounds_formula(p: ArqParams, eps_fail: float) -> int:
    """Closed-form ceiling expression, no correction."""
    a = (1.0 - p.eps_ul) * (1.0 - p.fb_s)
    arg = 1.0 - (1.0 - eps_fail) / a * (1.0 - p.ell)
    return math.ceil(math.log(arg) / math.log(p.ell))


def rounds_within(p: ArqParams, rho: float) -> int:
    """Rounds needed for ``pr_fail <= (1 + rho) * pr_fail_limit``."""
    if rho <= 0:
        raise DomainError("rho must be positive")
    if p.eps_ul * p.eps_fp == 0.0:
        raise Unachievable("the floor is zero; use required_rounds")
    arg = rho * p.eps_ul * p.eps_fp / ((1.0 - p.eps_fn) * (1.0 - p.eps_ul))
    if arg >= 1.0:
        return 1
    return max(1, math.ceil(math.log(arg) / math.log(p.ell)))


# --------------------------------------------------------------------------
# downlink outage
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FadingChannel:
    """Gamma(m, snr/m) instantaneous SNR: Rayleigh fading with m antennas."""

    snr: float
    antennas: int = 64
    symbols: int = 2048

    def __post_init__(self):
        if not self.snr > 0:
            raise DomainError("mean SNR must be positive")
        if self.antennas < 1 or self.symbols < 1:
            raise DomainError("antennas and symbols must be >= 1")

    @classmethod
    def from_db(cls, snr_db: float, antennas: int = 64, symbols: int = 2048) -> "FadingChannel":
        return cls(10.0 ** (snr_db / 10.0), antennas, symbols)

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.snr)

    @property
    def scale(self) -> float:
        return self.snr / self.antennas

    def threshold(self, bits: float) -> float:
        """Smallest SNR that carries ``bits`` in ``symbols`` channel uses."""
        return math.expm1(bits / self.symbols * math.log(2))

    def sample_snr(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.gamma(self.antennas, self.scale, size=size)


def outage(ch: FadingChannel, bits: float) -> float:
    """``P(gamma < 2^(B/c) - 1)`` by the Erlang CDF."""
    if bits < 0:
        raise DomainError("B must be non-negative")
    if bits == 0:
        return 0.0
    return gammainc_int(ch.antennas, ch.threshold(bits) / ch.scale)


def outage_array(ch: FadingChannel, bits) -> np.ndarray:
    return np.array([outage(ch, float(b)) for b in np.atleast_1d(bits)])


def outage_for_fp(ch: FadingChannel, k: int, eps_fp: float) -> float:
    """Outage when ``K log2(1/eps_fp)`` bits are sent."""
    return outage(ch, k * -math.log2(eps_fp))


# --------------------------------------------------------------------------
# fixed message length, random K
# --------------------------------------------------------------------------

FIXED_B_SCHEMES = ("le", "lb", "naive", "ef", "bloom")


@dataclass(frozen=True)
class SchemeModel:
    """Error probabilities of a scheme whose message length is fixed at ``B``.

    ``le``    field width ``min(floor(B/K), 32)``, fp ``2^-b``.
    ``lb``    asymptotic optimum, fp ``2^(-B/K)``.
    ``naive`` ``ceil(B/32)`` identifiers, the rest become false negatives.
    ``ef``    the largest k with ``ceil(log2 C(N, k)) <= B`` users, exactly coded.
    ``bloom`` Bloom filter with ``T`` tuned for ``k_design``.
    """

    scheme: str
    n: int = 1 << ID_BITS
    k_design: int | None = None

    def __post_init__(self):
        if self.scheme not in FIXED_B_SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "bloom" and not self.k_design:
            raise ValueError("the bloom model needs k_design")

    @property
    def grid_step_identifiers(self) -> bool:
        return self.scheme in ("naive", "ef")

    def keep(self, bits: int, k):
        """Users that fit into the message (concatenation schemes)."""
        k = np.asarray(k, dtype=np.int64)
        if self.scheme == "naive":
            return np.minimum(k, -(-bits // ID_BITS))
        if self.scheme == "ef":
            return np.minimum(k, ef_capacity(self.n, bits))
        return k

    def errors(self, bits: int, k) -> tuple[np.ndarray, np.ndarray]:
        """``(eps_fp, eps_fn)`` for every K in ``k``."""
        k = np.asarray(k, dtype=np.int64)
        kf = k.astype(np.float64)
        fp = np.zeros(k.shape)
        fn = np.zeros(k.shape)
        pos = k > 0
        if self.scheme == "le":
            width = np.minimum(bits // np.maximum(k, 1), LE_MAX_WIDTH)
            fp = np.where(pos, np.exp2(-width.astype(np.float64)), 0.0)
        elif self.scheme == "lb":
            fp = np.where(pos, np.exp2(-bits / np.maximum(kf, 1.0)), 0.0)
        elif self.scheme == "bloom":
            if bits > 0:
                t = bloom_hashes(bits, self.k_design)
                fp = np.array([bloom_fp_exact(bits, int(v), t) if v > 0 else 0.0
                               for v in k.ravel()]).reshape(k.shape)
            else:
                fp = np.where(pos, 1.0, 0.0)
        else:
            kept = self.keep(bits, k)
            fn = np.where(pos, 1.0 - kept / np.maximum(kf, 1.0), 0.0)
        return fp, fn


def expected_pr_fail(model: SchemeModel, bits: int, ch: FadingChannel, lam: float,
                     eps_ul: float, rounds: int, tail: float = 1e-10) -> dict:
    """``E_K[pr_fail]`` for Poisson(lam) decoded users and a fixed ``B``.

    The decoded user's own K is at least one, so false negatives are taken
    at ``max(K, 1)``.
    """
    k, pk = poisson_support(lam, tail)
    eps_dl = outage(ch, bits)
    fp, _ = model.errors(bits, k)
    _, fn = model.errors(bits, np.maximum(k, 1))
    pf = pr_fail_array(eps_ul, eps_dl, fp, fn, rounds)
    w = pk / pk.sum()
    return {
        "B": bits,
        "pr_fail": float(np.dot(w, pf)),
        "eps_dl": eps_dl,
        "eps_fp": float(np.dot(w, fp)),
        "eps_fn": float(np.dot(w, fn)),
    }


@dataclass
class Optimum:
    scheme: str
    B: int
    pr_fail: float
    eps_dl: float
    eps_fp: float
    eps_fn: float
    curve: list = field(default_factory=list, repr=False)


def b_upper_limit(ch: FadingChannel, p_out: float = 1.0 - 1e-12) -> int:
    """Message length beyond which the downlink is essentially always lost."""
    b = 64
    while outage(ch, b) < p_out:
        b *= 2
        if b > 1 << 22:
            break
    return b


def grid_step(model: SchemeModel, lam: float) -> int:
    return ID_BITS if model.grid_step_identifiers else max(1, math.ceil(lam / 8))


def b_grid(model: SchemeModel, ch: FadingChannel, lam: float) -> np.ndarray:
    step = grid_step(model, lam)
    return np.arange(step, b_upper_limit(ch) + step, step)


def optimize_b(model: SchemeModel, ch: FadingChannel, lam: float, eps_ul: float,
               rounds: int, refine: int = 32) -> Optimum:
    """Grid search for the B minimising the K-averaged failure probability.

    Ties go to the smallest B.  After the coarse grid, every B within
    ``refine`` bits of the coarse optimum is evaluated.
    """
    grid = b_grid(model, ch, lam)
    curve = [expected_pr_fail(model, int(b), ch, lam, eps_ul, rounds) for b in grid]
    best = min(curve, key=lambda r: (r["pr_fail"], r["B"]))
    if refine:
        lo = max(1, best["B"] - refine)
        seen = {r["B"] for r in curve}
        fine = [expected_pr_fail(model, b, ch, lam, eps_ul, rounds)
                for b in range(lo, best["B"] + refine + 1) if b not in seen]
        best = min(fine + [best], key=lambda r: (r["pr_fail"], r["B"]))
    return Optimum(model.scheme, best["B"], best["pr_fail"], best["eps_dl"],
                   best["eps_fp"], best["eps_fn"], curve)


optimize_B = optimize_b

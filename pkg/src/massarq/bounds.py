"""Message-length bounds for acknowledging K of N users.

Fixed K: the error-free length, converse bounds with false positives and
negatives, the covering-based achievability bounds and the asymptotic
``K log2(1/eps_fp)`` rate.

Random K: moment bounds on the expected false-positive rate and on the
probability that it exceeds a target, plus the exact sums they bound, and a
bisection search for the smallest adequate message length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._mathutil import (
    ceil_log2_comb, floor_mul, gammainc_int, log2_comb, log2_int, poisson_support,
)

LOG2E = math.log2(math.e)
MOMENT_CONST = 2.66
B_SEARCH_MAX = 1 << 20


class DomainError(ValueError):
    """Parameters outside the validity region of a bound."""


class Unachievable(ValueError):
    """No admissible value meets the requested target."""


def _check_prob(name, v, upper_open=False):
    if not (0 <= v < 1 if upper_open else 0 <= v <= 1):
        raise DomainError(f"{name}={v} outside [0, 1{')' if upper_open else ']'}")


def _check_nk(n, k):
    if not 0 <= k <= n:
        raise DomainError(f"need 0 <= K <= N, got K={k}, N={n}")


# --------------------------------------------------------------------------
# fixed K
# --------------------------------------------------------------------------

def b_error_free(n: int, k: int) -> int:
    """``ceil(log2 C(N, K))``: enough to tell every K-subset apart."""
    _check_nk(n, k)
    return ceil_log2_comb(n, k)


def b_error_free_lower(n: int, k: int) -> int:
    """``ceil(K log2(N/K))``, the simple lower bound on the error-free length."""
    _check_nk(n, k)
    return math.ceil(k * math.log2(n / k)) if k else 0


@dataclass(frozen=True)
class LowerBound:
    exact: float      # combinatorial form, big-integer binomials
    relaxed: float    # closed form after (N/K)^K <= C(N,K) <= (eN/K)^K


def b_lower_fp_fn(n: int, k: int, eps_fp: float, eps_fn: float) -> LowerBound:
    """Converse bound with both false positives and false negatives.

    ``log2 C(N,K) - log2(K C(floor(eps_fp N) + K, ceil((1-eps_fn)K)) C(N, floor(eps_fn K)))``
    together with its relaxed closed form.
    """
    _check_nk(n, k)
    if not 0 <= eps_fp < 0.5:
        raise DomainError("the bound needs 0 <= eps_fp < 1/2")
    _check_prob("eps_fn", eps_fn, upper_open=True)
    if k == 0:
        return LowerBound(0.0, 0.0)
    m = floor_mul(eps_fp, n)
    n_fn = floor_mul(eps_fn, k)
    keep = k - n_fn  # == ceil((1 - eps_fn) K) for exact eps_fn
    denom = k * math.comb(m + k, keep) * math.comb(n, n_fn)
    exact = log2_comb(n, k) - log2_int(denom)
    return LowerBound(exact, b_lower_relaxed(n, k, eps_fp, eps_fn))


def b_lower_relaxed(n: int, k: int, eps_fp: float, eps_fn: float) -> float:
    if k == 0:
        return 0.0
    q = eps_fp + k / n
    val = k * math.log2(1 / q) - k * math.log2(math.e / (1 - eps_fn)) - math.log2(k)
    if eps_fn > 0:
        val -= eps_fn * k * math.log2((1 - eps_fn) / (eps_fn * q))
    return val


def b_lower_fp(n: int, k: int, eps_fp: float) -> float:
    """Tighter converse without false negatives."""
    _check_nk(n, k)
    if not 0 < eps_fp < 1:
        raise DomainError("need 0 < eps_fp < 1")
    return (k * math.log2(1 / eps_fp)
            - LOG2E * (1 - eps_fp) * k * k / (eps_fp * n + (1 - eps_fp) * k))


def _cover_size(n: int, eps_fp: float, k: int) -> int:
    _check_nk(n, k)
    if not 0 < eps_fp < 1:
        raise DomainError("need 0 < eps_fp < 1")
    m = floor_mul(eps_fp, n)
    if k > m:
        raise DomainError(f"achievability needs K <= floor(N eps_fp) = {m}")
    return m


def b_upper_fp(n: int, k: int, eps_fp: float) -> float:
    """Covering achievability bound, binomial form."""
    m = _cover_size(n, eps_fp, k)
    lm = log2_comb(m, k)
    return log2_comb(n, k) - lm + math.log2(1 + lm * math.log(2))


def b_upper_fp_relaxed(n: int, k: int, eps_fp: float) -> float:
    """``K log2(e/eps_fp) + log2(1 + K ln(N eps_fp / K))``."""
    _cover_size(n, eps_fp, k)
    if k == 0:
        return 0.0
    return k * math.log2(math.e / eps_fp) + math.log2(1 + k * math.log(n * eps_fp / k))


def b_asymptotic(k: float, eps_fp: float) -> float:
    """``K log2(1/eps_fp)``."""
    if not 0 < eps_fp <= 1:
        raise DomainError("need 0 < eps_fp <= 1")
    return k * -math.log2(eps_fp)


def fixed_k_table(n: int, k: int, eps_fp: float) -> dict[str, float]:
    """All fixed-K bounds and scheme lengths at one point (bits)."""
    from . import codec

    out = {
        "error_free": b_error_free(n, k),
        "asymptotic": b_asymptotic(k, eps_fp),
        "lower_nofn": b_lower_fp(n, k, eps_fp),
        "le": codec.le_length(k, eps_fp),
        "bloom": codec.bloom_length(k, eps_fp),
        "hashconcat": codec.hashconcat_length(k, eps_fp),
    }
    if eps_fp < 0.5:
        lb = b_lower_fp_fn(n, k, eps_fp, 0.0)
        out["lower"] = lb.exact
        out["lower_relaxed"] = lb.relaxed
    if k <= floor_mul(eps_fp, n):
        out["upper"] = b_upper_fp(n, k, eps_fp)
        out["upper_relaxed"] = b_upper_fp_relaxed(n, k, eps_fp)
    return out


# --------------------------------------------------------------------------
# random K
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class KDistribution:
    """Discrete law of the number of decoded users (finite support)."""

    values: np.ndarray
    probs: np.ndarray
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64)
        p = np.asarray(self.probs, dtype=np.float64)
        if v.shape != p.shape or v.ndim != 1:
            raise ValueError("values and probs must be matching 1-d arrays")
        if (p < 0).any() or (v < 0).any():
            raise ValueError("negative value or probability")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @classmethod
    def fixed(cls, k: int) -> "KDistribution":
        return cls(np.array([k]), np.array([1.0]), "fixed", {"k": k})

    @classmethod
    def poisson(cls, lam: float, tail: float = 1e-12) -> "KDistribution":
        k, p = poisson_support(lam, tail)
        return cls(k, p, "poisson", {"lam": lam})

    @classmethod
    def bernoulli(cls, ps) -> "KDistribution":
        """Sum of independent Bernoulli(p_i) (Poisson-binomial), by convolution."""
        ps = np.asarray(ps, dtype=np.float64)
        pmf = np.array([1.0])
        for p in ps:
            pmf = np.concatenate([pmf * (1 - p), [0.0]]) + np.concatenate([[0.0], pmf * p])
        return cls(np.arange(len(pmf)), pmf, "bernoulli", {"n": len(ps)})

    @property
    def mean(self) -> float:
        if self.name == "poisson":
            return float(self.params["lam"])
        return float(np.dot(self.values, self.probs))

    @property
    def var(self) -> float:
        if self.name == "poisson":
            return float(self.params["lam"])
        if self.name == "fixed":
            return 0.0
        m = np.dot(self.values, self.probs)
        return float(np.dot((self.values - m) ** 2, self.probs))

    def expect(self, f) -> float:
        """``E[f(K)]`` for a vectorised ``f``."""
        return math.fsum(self.probs * f(self.values))

    def tail_gt(self, x: float) -> float:
        """``P(K > x)``."""
        if self.name == "poisson":
            if x < 0:
                return 1.0
            return gammainc_int(math.floor(x) + 1, self.params["lam"])
        return math.fsum(self.probs[self.values > x])


def fp_asymptotic(k, bits):
    """``2^(-B/K)`` with the K = 0 case defined as 0."""
    k = np.asarray(k, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.where(k > 0, np.exp2(-bits / np.where(k > 0, k, 1.0)), 0.0)


def expected_fp_exact(dist: KDistribution, bits: float) -> float:
    """``E[2^(-B/K)]`` over the full distribution."""
    return dist.expect(lambda k: fp_asymptotic(k, bits))


def expected_fp_bound(k_mean: float, k_var: float, bits: float) -> float:
    """Second-order bound ``2^(-B/Kbar) + 2.66 Var[K] / B^2``."""
    if bits <= 0:
        raise DomainError("B must be positive")
    if k_mean <= 0:
        raise DomainError("mean of K must be positive")
    return 2.0 ** (-bits / k_mean) + MOMENT_CONST * k_var / bits ** 2


def _threshold_k(bits: float, eps_target: float) -> float:
    if not 0 < eps_target < 1:
        raise DomainError("target must be in (0, 1)")
    return bits / -math.log2(eps_target)


def exceed_prob_exact(dist: KDistribution, bits: float, eps_target: float) -> float:
    """``P(2^(-B/K) > target) = P(K > B / log2(1/target))``."""
    return dist.tail_gt(_threshold_k(bits, eps_target))


def _check_exceed(k_mean, bits, eps_target):
    if eps_target < 2.0 ** (-bits / k_mean):
        raise DomainError("target below the fp rate at the mean; bound does not apply")


def exceed_prob_chebyshev(k_mean: float, k_var: float, bits: float, eps_target: float) -> float:
    _check_exceed(k_mean, bits, eps_target)
    gap = _threshold_k(bits, eps_target) - k_mean
    if gap <= 0:
        return math.inf
    return k_var / gap ** 2


def chernoff_eta(k_mean: float, bits: float, eps_target: float) -> float:
    return _threshold_k(bits, eps_target) / k_mean


def exceed_prob_chernoff(k_mean: float, bits: float, eps_target: float) -> float:
    """``(e^(eta-1) / eta^eta)^Kbar``, for independent activations."""
    _check_exceed(k_mean, bits, eps_target)
    eta = chernoff_eta(k_mean, bits, eps_target)
    return math.exp(k_mean * (eta - 1 - eta * math.log(eta)))


# --------------------------------------------------------------------------
# message-length selection
# --------------------------------------------------------------------------

RULES = ("expected", "exceed")
METHODS = ("exact", "moment", "chebyshev", "chernoff")


def select_b(rule: str, dist: KDistribution, eps_target: float, delta: float | None = None,
             method: str | None = None, b_max: int = B_SEARCH_MAX) -> int:
    """Smallest integer B meeting the selection rule.

    ``rule='expected'``: mean fp at most ``eps_target``; ``method`` is
    ``exact`` or ``moment``.  ``rule='exceed'``: ``P(fp > eps_target) <= delta``;
    ``method`` is ``exact``, ``chebyshev`` or ``chernoff``.
    """
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}")
    method = method or ("moment" if rule == "expected" else "chebyshev")
    if not 0 < eps_target < 1:
        raise DomainError("target must be in (0, 1)")
    m, v = dist.mean, dist.var
    if rule == "expected":
        if method == "exact":
            ok = lambda b: expected_fp_exact(dist, b) <= eps_target
        elif method == "moment":
            ok = lambda b: b > 0 and expected_fp_bound(m, v, b) <= eps_target
        else:
            raise ValueError(f"method {method!r} does not apply to the expected rule")
    else:
        if delta is None or not 0 <= delta < 1:
            raise DomainError("exceed rule needs delta in [0, 1)")
        if method == "exact":
            ok = lambda b: exceed_prob_exact(dist, b, eps_target) <= delta
        elif method in ("chebyshev", "chernoff"):
            def ok(b):
                if b <= 0 or eps_target < 2.0 ** (-b / m):
                    return False
                if method == "chebyshev":
                    return exceed_prob_chebyshev(m, v, b, eps_target) <= delta
                return exceed_prob_chernoff(m, b, eps_target) <= delta
        else:
            raise ValueError(f"method {method!r} does not apply to the exceed rule")
    if m == 0:
        return 0
    if ok(0):
        return 0
    if not ok(b_max):
        raise Unachievable(f"no B <= {b_max} meets the {rule} rule")
    lo, hi = 0, b_max  # ok(lo) false, ok(hi) true
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


select_B = select_b

import itertools
import math

import numpy as np
import pytest
from scipy import optimize, stats

from massarq import bounds
from massarq.bounds import DomainError, KDistribution, Unachievable

N32 = 1 << 32


def test_error_free_examples():
    assert bounds.b_error_free(N32, 0) == 0
    assert bounds.b_error_free(10, 3) == 7
    assert abs(bounds.b_error_free(N32, 100) - 2675) <= 1
    assert bounds.b_error_free_lower(N32, 100) <= bounds.b_error_free(N32, 100)


def test_asymptotic_examples():
    assert round(bounds.b_asymptotic(100, 0.01), 1) == 664.4
    assert round(bounds.b_asymptotic(100, 1e-4), 1) == 1328.8


def test_lower_tends_to_error_free():
    lb = bounds.b_lower_fp_fn(N32, 100, 2.0 ** -40, 0.0)
    ef = bounds.b_error_free(N32, 100)
    # floor(2^-40 * 2^32) = 0, so only the log2(K) term separates them
    assert ef - math.log2(100) - 1 <= lb.exact <= ef


def test_fixed_k_ordering_at_k100():
    t = bounds.fixed_k_table(N32, 100, 0.01)
    assert t["lower"] <= 664
    assert t["lower"] <= t["lower_nofn"] <= t["asymptotic"] <= t["upper"] <= t["upper_relaxed"]
    assert t["lower_relaxed"] <= t["lower"]
    assert t["asymptotic"] <= t["le"] <= t["asymptotic"] + 100


@pytest.mark.parametrize("n", [1 << 16, N32, 1 << 48])
@pytest.mark.parametrize("eps", [0.3, 0.1, 1e-2, 1e-4])
@pytest.mark.parametrize("k", [1, 5, 40, 300])
def test_bound_grid_dominance(n, eps, k):
    t = bounds.fixed_k_table(n, k, eps)
    # the two converses do not dominate each other; both sit below the rate
    assert t["lower"] <= t["asymptotic"] + 1e-9
    assert t["lower_nofn"] <= t["asymptotic"] + 1e-9
    if "upper" in t:
        assert max(t["lower"], t["lower_nofn"]) <= t["asymptotic"] <= t["upper"] + 1e-9
        assert t["upper"] <= t["upper_relaxed"] + 1e-9
    assert t["lower"] <= t["error_free"]


def test_lower_with_false_negatives_decreases():
    vals = [bounds.b_lower_fp_fn(N32, 100, 0.01, e).exact for e in (0.0, 0.05, 0.1, 0.3)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    for e in (0.05, 0.1, 0.3):
        lb = bounds.b_lower_fp_fn(N32, 100, 0.01, e)
        assert lb.relaxed <= lb.exact + 1e-9


def test_domain_errors():
    with pytest.raises(DomainError):
        bounds.b_lower_fp_fn(N32, 10, 0.5, 0.0)
    with pytest.raises(DomainError):
        bounds.b_lower_fp_fn(N32, 10, 0.1, 1.0)
    with pytest.raises(DomainError):
        bounds.b_error_free(5, 6)
    with pytest.raises(DomainError):
        bounds.b_upper_fp(100, 20, 0.1)  # K > N eps
    with pytest.raises(DomainError):
        bounds.exceed_prob_chebyshev(100, 100, 664, 1e-3)


# --------------------------------------------------------------------------
# brute-force covering oracles
# --------------------------------------------------------------------------

def _min_cover(n, k, m):
    """Exact minimum number of m-subsets of [n] covering every k-subset (MILP)."""
    blocks = list(itertools.combinations(range(n), m))
    targets = list(itertools.combinations(range(n), k))
    index = {t: i for i, t in enumerate(targets)}
    a = np.zeros((len(targets), len(blocks)))
    for j, blk in enumerate(blocks):
        for t in itertools.combinations(blk, k):
            a[index[t], j] = 1
    res = optimize.milp(np.ones(len(blocks)), integrality=np.ones(len(blocks)),
                        bounds=optimize.Bounds(0, 1),
                        constraints=optimize.LinearConstraint(a, lb=1))
    assert res.success
    return round(res.fun)


@pytest.mark.parametrize("n,k,eps", [(6, 2, 0.34), (8, 2, 0.45), (9, 2, 0.34), (10, 2, 0.45)])
def test_bounds_bracket_exact_cover(n, k, eps):
    m = math.floor(eps * n)
    cover = _min_cover(n, k, m)
    assert cover >= math.ceil(math.comb(n, k) / math.comb(m, k))
    assert bounds.b_lower_fp_fn(n, k, eps, 0.0).exact <= math.log2(cover)
    assert math.log2(cover) <= bounds.b_upper_fp(n, k, eps)


def _schonheim(v, k, t):
    c = 1
    for i in range(t - 1, -1, -1):
        c = math.ceil((v - i) / (k - i) * c)
    return c


def _greedy_cover(n, k, m, rng, candidates=400):
    """Greedy cover over random candidate blocks; returns the verified block list."""
    uncovered = set(itertools.combinations(range(n), k))
    chosen = []
    while uncovered:
        t = next(iter(uncovered))
        best, gain = None, -1
        for _ in range(candidates):
            rest = rng.choice([x for x in range(n) if x not in t], m - k, replace=False)
            blk = tuple(sorted(t + tuple(int(x) for x in rest)))
            g = sum(c in uncovered for c in itertools.combinations(blk, k))
            if g > gain:
                best, gain = blk, g
        chosen.append(best)
        uncovered.difference_update(itertools.combinations(best, k))
    return chosen


def test_bounds_bracket_greedy_cover_n32():
    n, k, eps = 32, 3, 0.25
    m = 8
    blocks = _greedy_cover(n, k, m, np.random.default_rng(5))
    covered = {c for b in blocks for c in itertools.combinations(b, k)}
    assert len(covered) == math.comb(n, k)
    lower = bounds.b_lower_fp_fn(n, k, eps, 0.0).exact
    assert lower == pytest.approx(math.log2(4960 / 495))
    assert lower <= math.log2(_schonheim(n, m, k)) <= math.log2(len(blocks))
    assert math.log2(len(blocks)) <= bounds.b_upper_fp(n, k, eps)


# --------------------------------------------------------------------------
# random K
# --------------------------------------------------------------------------

def test_poisson_distribution_moments():
    d = KDistribution.poisson(100)
    assert d.probs.sum() == pytest.approx(1, abs=1e-12)
    assert np.dot(d.values, d.probs) == pytest.approx(100, rel=1e-12)
    assert d.tail_gt(120) == pytest.approx(stats.poisson.sf(120, 100), rel=1e-10)


def test_bernoulli_distribution_matches_binomial():
    d = KDistribution.bernoulli([0.2] * 30)
    assert np.allclose(d.probs, stats.binom.pmf(np.arange(31), 30, 0.2))
    assert d.var == pytest.approx(30 * 0.2 * 0.8)


def test_moment_worked_value():
    v = bounds.expected_fp_bound(100, 100, 1329)
    assert v == pytest.approx(2 ** -13.29 + 266 / 1329 ** 2, rel=1e-12)
    assert v == pytest.approx(2.50e-4, abs=0.005e-4)
    assert bounds.expected_fp_exact(KDistribution.poisson(100), 1329) <= v


def test_moment_deterministic():
    assert bounds.expected_fp_bound(50, 0, 400) == 2.0 ** -8
    assert bounds.expected_fp_exact(KDistribution.fixed(50), 400) == 2.0 ** -8


@pytest.mark.parametrize("lam", [50, 75, 100, 150, 200])
@pytest.mark.parametrize("eps", [1e-2, 1e-4])
def test_moment_dominates_exact(lam, eps):
    d = KDistribution.poisson(lam)
    b = bounds.select_b("expected", d, eps, method="moment")
    for bb in (b // 2, b, 2 * b):
        assert bounds.expected_fp_exact(d, bb) <= bounds.expected_fp_bound(lam, lam, bb)


def test_chebyshev_zero_variance():
    assert bounds.exceed_prob_chebyshev(100, 0, 1000, 0.01) == 0.0


def test_chernoff_eta_one():
    b = 100 * math.log2(1 / 0.01) * (1 + 1e-12)
    assert bounds.chernoff_eta(100, b, 0.01) == pytest.approx(1)
    assert bounds.exceed_prob_chernoff(100, b, 0.01) == pytest.approx(1)


@pytest.mark.parametrize("lam", [10, 50, 100, 200, 500, 1000])
def test_exceed_bounds_dominate_exact(lam):
    d = KDistribution.poisson(lam)
    eps = 1e-4
    for kp in (1.2 * lam, 1.5 * lam, 2 * lam):
        b = kp * -math.log2(eps)
        exact = bounds.exceed_prob_exact(d, b, eps)
        assert exact == pytest.approx(stats.poisson.sf(math.floor(kp), lam), rel=1e-8, abs=1e-300)
        assert exact <= bounds.exceed_prob_chebyshev(lam, lam, b, eps)
        assert exact <= bounds.exceed_prob_chernoff(lam, b, eps)


@pytest.mark.parametrize("lam", [10, 25, 50, 100])
def test_chernoff_tighter_for_small_lambda(lam):
    b = 2 * lam * -math.log2(1e-4)
    assert (bounds.exceed_prob_chernoff(lam, b, 1e-4)
            < bounds.exceed_prob_chebyshev(lam, lam, b, 1e-4))


def test_select_b_deterministic():
    b = bounds.select_b("expected", KDistribution.fixed(100), 1e-4, method="exact")
    assert b == math.ceil(100 * math.log2(1e4))


def test_select_b_moment_satisfies_exact():
    d = KDistribution.poisson(100)
    b = bounds.select_b("expected", d, 1e-4)
    assert bounds.expected_fp_bound(100, 100, b) <= 1e-4 < bounds.expected_fp_bound(100, 100, b - 1)
    assert bounds.expected_fp_exact(d, b) <= 1e-4
    assert bounds.select_b("expected", d, 1e-4, method="exact") <= b


def test_select_b_exceed_rules():
    d = KDistribution.poisson(100)
    got = {m: bounds.select_b("exceed", d, 1e-4, delta=1e-3, method=m)
           for m in ("exact", "chebyshev", "chernoff")}
    assert got["exact"] <= got["chernoff"] <= got["chebyshev"]
    assert bounds.exceed_prob_exact(d, got["chebyshev"], 1e-4) <= 1e-3


def test_select_b_monotone_in_variance():
    prev = 0
    for var_scale in (0, 0.5, 1, 2, 4):
        if var_scale:
            vals = np.array([80, 100, 120])
            q = var_scale * 100 / 800  # Var = 2 q 20^2
            d = KDistribution(vals, np.array([q, 1 - 2 * q, q]))
        else:
            d = KDistribution.fixed(100)
        b = bounds.select_b("expected", d, 1e-4, method="moment")
        assert b >= prev
        prev = b


def test_select_b_unachievable():
    with pytest.raises(Unachievable):
        bounds.select_b("expected", KDistribution.poisson(100), 1e-4, b_max=500)
    with pytest.raises(ValueError):
        bounds.select_b("nope", KDistribution.fixed(3), 0.1)
    with pytest.raises(DomainError):
        bounds.select_b("exceed", KDistribution.fixed(3), 0.1)

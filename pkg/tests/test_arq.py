import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from massarq import arq
from massarq.arq import ArqParams, FadingChannel, SchemeModel
from massarq.bounds import DomainError, Unachievable

prob = st.floats(0.0, 1.0)


def _chain(p: ArqParams) -> float:
    """Independent oracle: walk the round-by-round state probabilities."""
    fail = 0.0
    reach = 1.0
    for _ in range(p.rounds):
        ul_ok = reach * (1 - p.eps_ul)
        ul_bad = reach * p.eps_ul
        fail += ul_ok * (1 - p.eps_dl) * 0  # correct ACK: success
        fail += ul_bad * (1 - p.eps_dl) * p.eps_fp  # false ACK: silent failure
        reach = ul_ok * p.fb_s + ul_bad * (1 - p.fb_f)
    return fail + reach


@settings(max_examples=300, deadline=None)
@given(prob, prob, prob, prob, st.integers(1, 40))
def test_closed_form_matches_chain(ul, dl, fp, fn, rounds):
    p = ArqParams(ul, dl, fp, fn, rounds)
    assert arq.pr_fail(p) == pytest.approx(_chain(p), abs=1e-12)
    assert arq.pr_fail(p) == pytest.approx(arq.pr_fail_sum(p), abs=1e-12)
    assert 0 <= arq.pr_fail(p) <= 1


@settings(max_examples=200, deadline=None)
@given(prob, prob, prob, prob, st.integers(1, 30))
def test_non_increasing_in_rounds(ul, dl, fp, fn, rounds):
    p = ArqParams(ul, dl, fp, fn, rounds)
    assert arq.pr_fail(p.with_rounds(rounds + 1)) <= arq.pr_fail(p) + 1e-15


def test_single_round():
    for ul, dl in itertools.product((0.1, 0.3), (0.0, 0.05, 0.5)):
        vals = [arq.pr_fail(ArqParams(ul, dl, fp, 0.0, 1)) for fp in (0.0, 0.5, 1.0)]
        assert max(vals) - min(vals) < 1e-15
        assert vals[0] == pytest.approx(1 - (1 - ul) * (1 - dl))
        assert vals[0] == pytest.approx(arq.pr_fail_onetx(ul, dl))


def test_ell_equals_one():
    p = ArqParams(1.0, 0.3, 0.0, 0.0, 7)
    assert p.ell == 1.0
    assert arq.pr_fail(p) == 1.0 == arq.pr_fail_sum(p)
    p = ArqParams(0.2, 1.0, 0.5, 0.0, 5)
    assert p.ell == 1.0 and arq.pr_fail(p) == 1.0


def test_limit_examples():
    p = ArqParams(0.1, 0.3, 0.01, 0.0, 1)
    assert arq.pr_fail_limit(p) == pytest.approx(1 - 0.9 / 0.901, rel=1e-12)
    assert arq.pr_fail_limit(p) == pytest.approx(1.110e-3, abs=5e-7)
    assert arq.pr_fail_limit_nofn(0.1, 0.01) == pytest.approx(arq.pr_fail_limit(p))
    assert arq.pr_fail_limit(ArqParams(0.1, 0.3, 0.0, 0.2)) == 0.0


@pytest.mark.parametrize("dl", [0.0, 0.1, 0.5, 0.9])
def test_limit_independent_of_dl(dl):
    base = arq.pr_fail_limit(ArqParams(0.2, 0.0, 0.03, 0.05))
    assert arq.pr_fail_limit(ArqParams(0.2, dl, 0.03, 0.05)) == pytest.approx(base, rel=1e-14)


def test_limit_closed_form_with_fn():
    ul, fp, fn = 0.2, 0.03, 0.05
    ref = 1 - (1 - ul) * (1 - fn) / (1 - fn - ul * (1 - fn - fp))
    assert arq.pr_fail_limit(ArqParams(ul, 0.1, fp, fn)) == pytest.approx(ref, rel=1e-12)


def test_limit_reached_at_200_rounds():
    for ul, dl, fp, fn in itertools.product((0.1, 0.5), (0.0, 0.3), (1e-2, 1e-4), (0.0, 0.05)):
        p = ArqParams(ul, dl, fp, fn, 200)
        if p.ell <= 0.9:
            assert abs(arq.pr_fail(p) - arq.pr_fail_limit(p)) < 1e-9


def test_domain_checks():
    with pytest.raises(DomainError):
        ArqParams(1.2)
    with pytest.raises(DomainError):
        ArqParams(0.1, rounds=0)


# --------------------------------------------------------------------------
# required rounds
# --------------------------------------------------------------------------

def _search(p, target, max_l=10_000):
    for l in range(1, max_l + 1):
        if arq.pr_fail(p.with_rounds(l)) <= target:
            return l
    return None


@pytest.mark.parametrize("ul,dl,fp,target", [
    (0.1, 0.1, 1e-2, 2e-3), (0.1, 0.3, 1e-4, 1e-3), (0.5, 0.2, 1e-3, 1e-2),
    (0.3, 0.05, 0.0, 1e-6), (0.1, 0.0, 0.05, 0.1)])
def test_required_rounds_vs_search(ul, dl, fp, target):
    p = ArqParams(ul, dl, fp)
    got = arq.required_rounds(p, target)
    assert got == _search(p, target)
    assert abs(arq.required_rounds_formula(p, target) - got) <= 1


def test_required_rounds_trivial_and_unachievable():
    p = ArqParams(0.1, 0.1, 0.01)
    assert arq.required_rounds(p, 0.5) == 1
    with pytest.raises(Unachievable):
        arq.required_rounds(p, arq.pr_fail_limit(p))
    with pytest.raises(Unachievable):
        arq.required_rounds(p, 1e-5)


@pytest.mark.parametrize("rho", [0.01, 0.1, 1.0])
def test_rounds_within(rho):
    p = ArqParams(0.1, 0.2, 1e-3)
    l = arq.rounds_within(p, rho)
    assert arq.pr_fail(p.with_rounds(l)) <= (1 + rho) * arq.pr_fail_limit(p)


# --------------------------------------------------------------------------
# fading downlink
# --------------------------------------------------------------------------

def test_outage_basic():
    ch = FadingChannel.from_db(0.0)
    assert arq.outage(ch, 0) == 0.0
    vals = arq.outage_array(ch, np.arange(0, 6000, 250))
    assert np.all(np.diff(vals) >= 0)
    assert ch.snr_db == pytest.approx(0.0)


@pytest.mark.parametrize("snr_db,bits", [(-5, 700), (0, 1560), (5, 2860), (0, 2000)])
def test_outage_matches_gamma_cdf(snr_db, bits):
    ch = FadingChannel.from_db(snr_db)
    ref = stats.gamma.cdf(ch.threshold(bits), a=64, scale=ch.scale)
    assert arq.outage(ch, bits) == pytest.approx(ref, rel=1e-9, abs=1e-300)


@pytest.mark.parametrize("snr_db", [-5, 0, 5])
def test_outage_monte_carlo(snr_db):
    ch = FadingChannel.from_db(snr_db)
    rng = np.random.default_rng(snr_db + 100)
    n = 10_000_000
    bits = {-5: 720, 0: 1600, 5: 2900}[snr_db]
    thr = ch.threshold(bits)
    hits = sum(int((ch.sample_snr(rng, n // 10) < thr).sum()) for _ in range(10))
    p = arq.outage(ch, bits)
    assert abs(hits / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_outage_for_fp():
    ch = FadingChannel.from_db(0)
    assert arq.outage_for_fp(ch, 100, 0.01) == arq.outage(ch, 100 * math.log2(100))


# --------------------------------------------------------------------------
# fixed-B scheme models and optimisation
# --------------------------------------------------------------------------

def test_scheme_model_errors():
    k = np.array([0, 1, 50, 100, 200])
    fp, fn = SchemeModel("le").errors(700, k)
    assert fp.tolist() == [0.0, 2.0 ** -32, 2.0 ** -14, 2.0 ** -7, 2.0 ** -3]
    assert not fn.any()
    fp, fn = SchemeModel("naive").errors(1600, k)
    assert not fp.any()
    assert fn.tolist() == [0.0, 0.0, 0.0, 0.5, 0.75]
    fp, _ = SchemeModel("lb").errors(700, np.array([100]))
    assert fp[0] == 2.0 ** -7
    _, fn = SchemeModel("ef").errors(2676, np.array([100, 101]))
    assert fn[0] == 0.0 and fn[1] > 0.0
    with pytest.raises(ValueError):
        SchemeModel("bloom")
    with pytest.raises(ValueError):
        SchemeModel("nope")


def test_single_round_optimum_ignores_fp():
    """With one round only the erasure matters, so shorter is always better."""
    ch = FadingChannel.from_db(-5)
    a = arq.expected_pr_fail(SchemeModel("le"), 300, ch, 100, 0.1, 1)
    b = arq.expected_pr_fail(SchemeModel("lb"), 300, ch, 100, 0.1, 1)
    assert a["pr_fail"] == pytest.approx(b["pr_fail"], rel=1e-14)
    assert a["pr_fail"] == pytest.approx(1 - 0.9 * (1 - a["eps_dl"]), rel=1e-12)


def test_optimum_tie_break_and_refinement():
    ch = FadingChannel.from_db(-5)
    opt = arq.optimize_b(SchemeModel("le"), ch, 100, 0.1, 5)
    assert opt.B == 693
    assert opt.pr_fail == pytest.approx(1.5627e-3, rel=1e-3)
    coarse = min(r["pr_fail"] for r in opt.curve)
    assert opt.pr_fail <= coarse


def test_le_beats_naive_at_minus5db():
    ch = FadingChannel.from_db(-5)
    le = arq.optimize_b(SchemeModel("le"), ch, 100, 0.1, 5)
    naive = arq.optimize_b(SchemeModel("naive"), ch, 100, 0.1, 5)
    assert le.pr_fail < naive.pr_fail


def test_le_curve_u_shape_l5():
    ch = FadingChannel.from_db(-5)
    model = SchemeModel("le")
    ys = np.array([arq.expected_pr_fail(model, int(b), ch, 100, 0.1, 5)["pr_fail"]
                   for b in arq.b_grid(model, ch, 100)])
    i = int(np.argmin(ys))
    assert 0 < i < len(ys) - 1
    assert np.sum(ys == ys[i]) == 1
    assert np.all(np.diff(ys[: i + 1]) <= 0) and np.all(np.diff(ys[i:]) >= 0)


def test_grid_steps():
    assert arq.grid_step(SchemeModel("le"), 100) == 13
    assert arq.grid_step(SchemeModel("naive"), 100) == 32
    ch = FadingChannel.from_db(-5)
    assert arq.outage(ch, arq.b_upper_limit(ch)) >= 1 - 1e-12

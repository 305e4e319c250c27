import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from massarq import sim
from massarq.arq import FadingChannel
from massarq.codec import SchemeConfig
from massarq.figures import UnknownFigure
from massarq.sim import SimConfig

N32 = 1 << 32


def test_config_validation():
    le = SchemeConfig.le(0.01)
    with pytest.raises(ValueError):
        SimConfig(le)
    with pytest.raises(ValueError):
        SimConfig(le, k=3, lam=3.0)
    with pytest.raises(ValueError):
        SimConfig(le, k=3, trials=0)
    with pytest.raises(ValueError):
        SimConfig(le, k=3, eps_ul=1.5)


def test_agrees():
    assert sim.agrees(100, 10_000, 0.01)
    assert not sim.agrees(160, 10_000, 0.01)
    assert sim.agrees(0, 1000, 1e-4)
    assert not sim.agrees(5, 1000, 1e-4)
    assert sim.agrees(0, 10, 0.0) and not sim.agrees(1, 10, 0.0)
    assert sim.agrees(10, 10, 1.0)


def test_agrees_false_alarm_rate():
    """At the 3-sigma gate, true-p draws are rejected rarely."""
    rng = np.random.default_rng(0)
    for p, n in ((0.01, 10_000), (1e-4, 20_000), (0.3, 500)):
        draws = rng.binomial(n, p, 2000)
        rejected = sum(not sim.agrees(int(d), n, p) for d in draws)
        assert rejected <= 20


def test_trials_for():
    assert sim.trials_for(0.0) == 100_000
    assert sim.trials_for(1e-4) == 400_000
    assert sim.trials_for(1e-6, cap=1_000_000) == 1_000_000


def test_sample_k_poisson():
    cfg = SimConfig(SchemeConfig.le(0.01), lam=100.0)
    ks = cfg.sample_k(np.random.default_rng(1), 200_000)
    assert abs(ks.mean() - 100) < 3 * math.sqrt(100 / 200_000)
    edges = np.arange(70, 131)
    obs = np.array([(ks == v).sum() for v in edges])
    exp = stats.poisson.pmf(edges, 100) * len(ks)
    assert stats.chisquare(obs, exp * obs.sum() / exp.sum()).pvalue > 1e-3


def test_sample_k_bernoulli():
    cfg = SimConfig(SchemeConfig.le(0.01), activation=(0.5,) * 20 + (0.1,) * 10)
    ks = cfg.sample_k(np.random.default_rng(1), 100_000)
    assert abs(ks.mean() - 11) < 0.05
    assert cfg.k_distribution().mean == pytest.approx(11)


def test_enumerative_has_no_errors():
    cfg = SimConfig(SchemeConfig.enumerative(N32), k=20, trials=200, probes=200)
    rep = sim.run_fp_trial(cfg)
    assert rep.fp_events == 0 and rep.fn_events == 0
    assert rep.analytic == 0.0
    cfg = SimConfig(SchemeConfig.enumerative(N32), lam=20.0, trials=3000, rounds=3)
    rep = sim.run_arq_trial(cfg)
    assert rep.failures == 0 and rep.pr_fail == 0.0


def test_le_fp_rate_million_probes():
    cfg = SimConfig(SchemeConfig.le(0.01), k=100, trials=1000, probes=1000, seed=3)
    rep = sim.run_fp_trial(cfg)
    assert rep.fp_trials == 1_000_000
    assert rep.analytic == 2.0 ** -7
    assert sim.agrees(rep.fp_events, rep.fp_trials, rep.analytic)
    assert rep.fn_events == 0


def test_bloom_fixed_b_poisson_k():
    cfg = SimConfig(SchemeConfig.bloom(960, k_design=100), lam=100.0, trials=2000,
                    probes=500, seed=4)
    rep = sim.run_fp_trial(cfg)
    assert sim.agrees(rep.fp_events, rep.fp_trials, rep.analytic)
    assert rep.fn_events == 0


def test_naive_false_negatives():
    cfg = SimConfig(SchemeConfig.naive(bits=1600), lam=60.0, trials=3000, probes=10)
    rep = sim.run_fp_trial(cfg)
    assert rep.fp_events == 0
    assert sim.agrees(rep.fn_events, rep.fn_trials, cfg.analytic_fn())
    assert rep.capacity_events > 0


def test_arq_fixed_erasures_match_analytic():
    cfg = SimConfig(SchemeConfig.le(0.25, k_max=64), k=20, eps_ul=0.3, eps_dl=0.2,
                    rounds=3, trials=40_000, seed=9)
    rep = sim.run_arq_trial(cfg)
    assert sim.agrees(rep.failures, rep.trials, rep.analytic)
    # per-round bookkeeping: round one sees every trial
    assert rep.active[0] == rep.trials
    assert all(a >= b for a, b in zip(rep.active, rep.active[1:]))


def test_arq_fading_naive_matches_analytic():
    bits = 640
    cfg = SimConfig(sim.codec_for("naive", bits), lam=20.0, eps_ul=0.1,
                    channel=FadingChannel.from_db(-5), rounds=2, trials=20_000, seed=2)
    rep = sim.run_arq_trial(cfg)
    assert sim.agrees(rep.failures, rep.trials, rep.analytic)


def test_single_round_failure_is_erasure_only():
    cfg = SimConfig(SchemeConfig.le(0.5), k=10, eps_ul=0.2, eps_dl=0.1, trials=20_000)
    rep = sim.run_arq_trial(cfg)
    assert rep.analytic == pytest.approx(1 - 0.8 * 0.9)
    assert sim.agrees(rep.failures, rep.trials, rep.analytic)


def test_determinism_and_worker_invariance():
    cfg = SimConfig(SchemeConfig.le(0.1), lam=10.0, eps_ul=0.2, eps_dl=0.1, rounds=2,
                    trials=3000, block=700, seed=11)
    a = sim.run_arq_trial(cfg)
    b = sim.run_arq_trial(cfg)
    c = sim.run_arq_trial(cfg, workers=2)
    assert a.summary() == b.summary() == c.summary()
    d = sim.run_arq_trial(replace(cfg, seed=12))
    assert d.summary() != a.summary()


def test_report_standard_errors():
    rep = sim.SimReport(trials=400, failures=100)
    assert rep.pr_fail == 0.25
    assert rep.pr_fail_se == pytest.approx(math.sqrt(0.25 * 0.75 / 400))
    assert math.isnan(sim.SimReport().pr_fail)


def test_codec_for():
    assert sim.codec_for("le", 693).le_width_for(100) == 6
    assert sim.codec_for("naive", 673).naive_capacity() == 22
    assert sim.codec_for("ef", 2676).capacity() == 100
    with pytest.raises(ValueError):
        sim.codec_for("lb", 100)


def test_reproduce_unknown(tmp_path):
    with pytest.raises(UnknownFigure):
        sim.reproduce("7", tmp_path)

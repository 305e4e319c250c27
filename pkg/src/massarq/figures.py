"""Parameter sweeps behind each reproducible figure.

Every builder returns ``(header, rows)``; :func:`reproduce` writes them as
``fig<id>.csv`` next to a ``fig<id>.json`` run manifest and, unless
disabled, a ``fig<id>.png`` rendering.

====================  ====================================================
id                    content
====================  ====================================================
``1``                 message length vs K, bounds and schemes
``pec``               L-round failure vs downlink erasure, fixed K
``3a``                expected fp vs lambda, exact and second-order bound
``3b``                P(fp > target) vs lambda, exact, Chebyshev, Chernoff
``pec-poisson``       failure vs target fp, Poisson vs deterministic K
``4``                 optimised failure vs lambda under fading
``5a`` / ``5b``       optimised failure vs mean SNR, eps_ul 0.1 / 0.01
``6``                 failure vs B at lambda=100, -5 dB
====================  ====================================================
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import arq, bounds, sim
from ._output import write_csv, write_manifest
from .codec import SchemeConfig

N_DEFAULT = 1 << 32


class UnknownFigure(KeyError):
    pass


@dataclass(frozen=True)
class PlotHint:
    x: str
    ys: tuple
    group: tuple = ()
    logy: bool = True
    logx: bool = False
    xlabel: str = ""
    ylabel: str = ""


@dataclass
class Figure:
    id: str
    title: str
    build: object
    hint: PlotHint
    params: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------

def fig_bounds(n=N_DEFAULT, ks=tuple(range(10, 301, 10)), eps=(1e-2, 1e-4), **_):
    header = ["n", "k", "eps_fp", "name", "bits"]
    rows = []
    for e in eps:
        for k in ks:
            for name, bits in bounds.fixed_k_table(n, k, e).items():
                rows.append({"n": n, "k": k, "eps_fp": e, "name": name, "bits": float(bits)})
    return header, rows


def _pec_sim(eps_ul, eps_dl, eps_fp, rounds, k, trials, seed, workers):
    cfg = sim.SimConfig(SchemeConfig.le(eps_fp), k=k, eps_ul=eps_ul, eps_dl=eps_dl,
                        rounds=rounds, trials=trials, seed=seed)
    return sim.run_arq_trial(cfg, workers=workers)


def fig_pec(eps_ul=(0.1, 0.01), eps_fp=(1e-2, 1e-4), rounds=(1, 3, 5),
            eps_dl=tuple(10.0 ** np.arange(-3.0, 0.01, 0.25)), k=50,
            trials=0, seed=1, workers=1, **_):
    """Analytic curve at the nominal eps_fp and, with ``trials``, an LE simulation.

    The LE codec rounds the field width up, so its own fp is ``2^-b``;
    ``codec_analytic`` is the formula at that value and is what the
    simulation estimates.
    """
    header = ["eps_ul", "eps_fp", "rounds", "eps_dl", "analytic", "limit",
              "codec_fp", "codec_analytic", "sim", "sim_se", "trials"]
    rows = []
    for ul in eps_ul:
        for fp in eps_fp:
            codec_fp = SchemeConfig.le(fp).expected_fp(k)
            for L in rounds:
                for dl in eps_dl:
                    dl = float(dl)
                    r = {"eps_ul": ul, "eps_fp": fp, "rounds": L, "eps_dl": dl,
                         "analytic": arq.pr_fail(arq.ArqParams(ul, dl, fp, 0.0, L)),
                         "limit": arq.pr_fail_limit_nofn(ul, fp),
                         "codec_fp": codec_fp,
                         "codec_analytic": arq.pr_fail(arq.ArqParams(ul, dl, codec_fp, 0.0, L))}
                    if trials:
                        rep = _pec_sim(ul, dl, fp, L, k, trials, seed, workers)
                        r.update(sim=rep.pr_fail, sim_se=rep.pr_fail_se, trials=rep.trials)
                    rows.append(r)
    return header, rows


def fig_moment(lams=tuple(range(5, 201, 5)), k_design=100, eps_target=1e-4, **_):
    bits = k_design * -math.log2(eps_target)
    header = ["lam", "k_design", "B", "eps_target", "exact", "moment"]
    rows = []
    for lam in lams:
        d = bounds.KDistribution.poisson(lam)
        rows.append({"lam": lam, "k_design": k_design, "B": bits, "eps_target": eps_target,
                     "exact": bounds.expected_fp_exact(d, bits),
                     "moment": bounds.expected_fp_bound(d.mean, d.var, bits)})
    return header, rows


def fig_exceed(lams=tuple(range(5, 101, 5)), k_design=100, eps_target=1e-4, **_):
    """Only ``lam < k_design`` is covered by the tail bounds; others are nan."""
    bits = k_design * -math.log2(eps_target)
    header = ["lam", "k_design", "B", "eps_target", "exact", "chebyshev", "chernoff"]
    rows = []
    for lam in lams:
        d = bounds.KDistribution.poisson(lam)
        r = {"lam": lam, "k_design": k_design, "B": bits, "eps_target": eps_target,
             "exact": bounds.exceed_prob_exact(d, bits, eps_target)}
        try:
            r["chebyshev"] = bounds.exceed_prob_chebyshev(d.mean, d.var, bits, eps_target)
            r["chernoff"] = bounds.exceed_prob_chernoff(d.mean, bits, eps_target)
        except bounds.DomainError:
            r["chebyshev"] = r["chernoff"] = math.nan
        rows.append(r)
    return header, rows


def fig_pec_poisson(lams=(10, 100, 1000), eps_targets=tuple(10.0 ** np.arange(-5.0, -0.99, 0.25)),
                    eps_ul=0.1, eps_dl=0.01, rounds=5, **_):
    header = ["lam", "eps_target", "B", "random_k", "deterministic_k"]
    rows = []
    for lam in lams:
        d = bounds.KDistribution.poisson(lam, tail=1e-14)
        for t in eps_targets:
            t = float(t)
            b = bounds.select_b("expected", d, t, method="moment")
            fp = bounds.fp_asymptotic(d.values, b)
            pf = arq.pr_fail_array(eps_ul, eps_dl, fp, 0.0, rounds)
            rows.append({"lam": lam, "eps_target": t, "B": b,
                         "random_k": math.fsum(d.probs * pf) / math.fsum(d.probs),
                         "deterministic_k": arq.pr_fail(arq.ArqParams(eps_ul, eps_dl, t, 0.0, rounds))})
    return header, rows


SIM_SCHEMES = ("le", "naive")


def _optimum_row(opt, **extra):
    return {**extra, "scheme": opt.scheme, "B": opt.B, "pr_fail": opt.pr_fail,
            "eps_dl": opt.eps_dl, "eps_fp": opt.eps_fp, "eps_fn": opt.eps_fn}


def _sim_optimum(row, ch, lam, eps_ul, rounds, trials, seed, workers):
    cfg = sim.SimConfig(sim.codec_for(row["scheme"], row["B"]), lam=lam, eps_ul=eps_ul,
                        channel=ch, rounds=rounds, trials=trials, seed=seed)
    rep = sim.run_arq_trial(cfg, workers=workers)
    row.update(sim=rep.pr_fail, sim_se=rep.pr_fail_se, trials=rep.trials)


OPT_HEADER = ["scheme", "B", "pr_fail", "eps_dl", "eps_fp", "eps_fn", "sim", "sim_se", "trials"]


def fig_lambda(lams=(10, 25, 50, 75, 100, 150, 200), snrs_db=(-5.0, 0.0, 5.0),
               schemes=("naive", "ef", "le", "lb"), eps_ul=0.1, rounds=5, antennas=64,
               symbols=2048, trials=0, seed=1, workers=1, **_):
    header = ["snr_db", "lam"] + OPT_HEADER
    rows = []
    for db in snrs_db:
        ch = arq.FadingChannel.from_db(db, antennas, symbols)
        for lam in lams:
            for s in schemes:
                opt = arq.optimize_b(arq.SchemeModel(s), ch, lam, eps_ul, rounds)
                r = _optimum_row(opt, snr_db=db, lam=lam)
                if trials and s in SIM_SCHEMES:
                    _sim_optimum(r, ch, lam, eps_ul, rounds, trials, seed, workers)
                rows.append(r)
    return header, rows


def fig_snr(eps_ul=0.1, snrs_db=tuple(range(-10, 11)), lam=100, rounds=(1, 5, 10),
            schemes=("naive", "ef", "le", "lb"), antennas=64, symbols=2048,
            trials=0, seed=1, workers=1, **_):
    header = ["eps_ul", "rounds", "snr_db"] + OPT_HEADER
    rows = []
    for L in rounds:
        for db in snrs_db:
            ch = arq.FadingChannel.from_db(float(db), antennas, symbols)
            for s in schemes:
                opt = arq.optimize_b(arq.SchemeModel(s), ch, lam, eps_ul, L)
                r = _optimum_row(opt, eps_ul=eps_ul, rounds=L, snr_db=float(db))
                if trials and s in SIM_SCHEMES:
                    _sim_optimum(r, ch, lam, eps_ul, L, trials, seed, workers)
                rows.append(r)
    return header, rows


def fig_length(lam=100, snr_db=-5.0, eps_ul=0.1, rounds=(2, 5, 10),
               schemes=("naive", "ef", "le", "lb"), b_step=8, b_max=2400,
               antennas=64, symbols=2048, **_):
    header = ["rounds", "scheme", "B", "pr_fail", "eps_dl", "eps_fp", "eps_fn"]
    ch = arq.FadingChannel.from_db(snr_db, antennas, symbols)
    rows = []
    for L in rounds:
        for s in schemes:
            model = arq.SchemeModel(s)
            for b in range(b_step, b_max + 1, b_step):
                r = arq.expected_pr_fail(model, b, ch, lam, eps_ul, L)
                rows.append({"rounds": L, "scheme": s, **r})
    return header, rows


FIGURES = {
    "1": Figure("1", "Message length vs K", fig_bounds,
                PlotHint("k", ("bits",), ("eps_fp", "name"), logy=False,
                         xlabel="K", ylabel="B [bits]")),
    "pec": Figure("pec", "Failure vs downlink erasure, fixed K", fig_pec,
                  PlotHint("eps_dl", ("analytic", "limit", "sim"), ("eps_ul", "eps_fp", "rounds"),
                           logx=True, xlabel="eps_dl", ylabel="Pr(fail)")),
    "3a": Figure("3a", "Expected false positive probability vs lambda", fig_moment,
                 PlotHint("lam", ("exact", "moment"), xlabel="lambda", ylabel="mean eps_fp")),
    "3b": Figure("3b", "P(eps_fp > target) vs lambda", fig_exceed,
                 PlotHint("lam", ("exact", "chebyshev", "chernoff"), xlabel="lambda",
                          ylabel="P(eps_fp > target)")),
    "pec-poisson": Figure("pec-poisson", "Failure vs target fp, Poisson K", fig_pec_poisson,
                          PlotHint("eps_target", ("random_k", "deterministic_k"), ("lam",),
                                   logx=True, xlabel="target eps_fp", ylabel="Pr(fail)")),
    "4": Figure("4", "Optimised failure vs lambda", fig_lambda,
                PlotHint("lam", ("pr_fail", "sim"), ("snr_db", "scheme"), xlabel="lambda",
                         ylabel="Pr(fail)")),
    "5a": Figure("5a", "Optimised failure vs SNR, eps_ul=0.1", fig_snr,
                 PlotHint("snr_db", ("pr_fail", "sim"), ("rounds", "scheme"),
                          xlabel="mean SNR [dB]", ylabel="Pr(fail)"), {"eps_ul": 0.1}),
    "5b": Figure("5b", "Optimised failure vs SNR, eps_ul=0.01", fig_snr,
                 PlotHint("snr_db", ("pr_fail", "sim"), ("rounds", "scheme"),
                          xlabel="mean SNR [dB]", ylabel="Pr(fail)"), {"eps_ul": 0.01}),
    "6": Figure("6", "Failure vs message length", fig_length,
                PlotHint("B", ("pr_fail",), ("rounds", "scheme"), xlabel="B [bits]",
                         ylabel="Pr(fail)")),
}


def figure_ids() -> list[str]:
    return list(FIGURES)


def get_figure(figure_id: str) -> Figure:
    try:
        return FIGURES[str(figure_id)]
    except KeyError:
        raise UnknownFigure(f"unknown figure {figure_id!r}; choose from "
                            f"{', '.join(FIGURES)}") from None


def build(figure_id: str, **kw):
    fig = get_figure(figure_id)
    return fig.build(**{**fig.params, **kw})


def reproduce(figure: str, out_dir, seed: int = 1, trials: int = 0, plot: bool = True,
              workers: int = 1, command=None, **kw) -> dict:
    """Write ``fig<id>.csv``, ``fig<id>.json`` and (optionally) ``fig<id>.png``.

    ``trials > 0`` adds Monte-Carlo columns where a figure has them.
    Returns the written paths.
    """
    fig = get_figure(figure)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = {**fig.params, **kw, "seed": seed, "trials": trials}
    header, rows = fig.build(**params, workers=workers)
    stem = out / f"fig{fig.id}"
    paths = {"csv": stem.with_suffix(".csv"), "manifest": stem.with_suffix(".json")}
    write_csv(paths["csv"], header, rows)
    write_manifest(paths["manifest"], command or ["reproduce", fig.id],
                   {"figure": fig.id, **params, "workers": workers}, seed)
    if plot:
        from .plotting import plot_rows

        paths["png"] = stem.with_suffix(".png")
        plot_rows(rows, fig.hint, paths["png"], title=fig.title)
    return paths

"""Command-line front end.

Subcommands: ``bounds``, ``codec``, ``arq``, ``simulate``, ``reproduce``.
Values come from flags, then a flat JSON ``--config`` file, then defaults.
Exit codes: 0 success, 2 usage error, 3 domain error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import arq, bounds, codec, figures, sim
from ._output import write_csv, write_manifest
from .codec import DecodedSet, SchemeConfig

EXIT_USAGE = 2
EXIT_DOMAIN = 3

DEFAULTS = {
    "n": 1 << 32,
    "k": None,
    "lambda": None,
    "k_max": 1023,
    "eps_fp": "0.01",
    "eps_fn": "0",
    "eps_ul": "0.1",
    "eps_dl": None,
    "snr_db": None,
    "antennas": 64,
    "symbols": 2048,
    "rounds": "5",
    "trials": None,
    "seed": 1,
    "scheme": None,
    "bits": None,
    "delta": 0.01,
    "probes": 1000,
    "mode": "arq",
    "workers": 1,
    "out": None,
    "figure": None,
    "no_plot": False,
}

# values that may be given as lists ("a,b,c") or ranges ("start:stop:step")
LIST_KEYS = {"k", "lambda", "eps_fp", "eps_fn", "eps_ul", "eps_dl", "snr_db", "rounds", "bits",
             "scheme"}
INT_KEYS = {"n", "k", "k_max", "antennas", "symbols", "rounds", "trials", "seed", "bits",
            "probes", "workers"}


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# option handling
# --------------------------------------------------------------------------

def _parse_list(text, integer: bool):
    if isinstance(text, (list, tuple)):
        return [int(v) if integer else float(v) for v in text]
    if isinstance(text, (int, float)):
        return [int(text) if integer else float(text)]
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = [float(v) for v in part.split(":")]
            if len(bits) not in (2, 3):
                raise UsageError(f"bad range {part!r}")
            start, stop = bits[0], bits[1]
            step = bits[2] if len(bits) == 3 else 1.0
            if step <= 0:
                raise UsageError(f"bad range step in {part!r}")
            vals = np.arange(start, stop + step / 2, step)
            out.extend(int(round(v)) if integer else float(v) for v in vals)
        else:
            out.append(int(part) if integer else float(part))
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over config-file values over defaults."""
    conf = {}
    if getattr(args, "config", None):
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(raw, dict):
            raise UsageError("config file must hold a flat JSON object")
        for key, v in raw.items():
            key = key.replace("-", "_")
            if key == "lam":
                key = "lambda"
            if key not in DEFAULTS:
                raise UsageError(f"unknown config key {key!r}")
            if isinstance(v, (dict,)):
                raise UsageError(f"config key {key!r} must be a scalar or list")
            conf[key] = v
    opts = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        opts[key] = flag if flag is not None and flag is not False else conf.get(key, default)
    if getattr(args, "no_plot", False):
        opts["no_plot"] = True
    try:
        for key in LIST_KEYS:
            if opts[key] is None or key == "scheme":
                continue
            opts[key] = _parse_list(opts[key], key in INT_KEYS)
        for key in INT_KEYS - LIST_KEYS:
            if opts[key] is not None:
                opts[key] = int(opts[key])
        opts["delta"] = float(opts["delta"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if isinstance(opts["scheme"], str):
        opts["scheme"] = [s.strip() for s in opts["scheme"].split(",") if s.strip()]
    return opts


def _one(opts, key):
    v = opts[key]
    if v is None:
        raise UsageError(f"--{key.replace('_', '-')} is required")
    if isinstance(v, list):
        if len(v) != 1:
            raise UsageError(f"--{key.replace('_', '-')} takes a single value here")
        return v[0]
    return v


def _emit(opts, header, rows, command):
    out = opts["out"]
    write_csv(out, header, rows)
    if out not in (None, "-"):
        write_manifest(Path(out).with_suffix(".json"), command, _config_view(opts),
                       opts["seed"])


def _config_view(opts):
    return {k: v for k, v in opts.items() if v is not None}


# --------------------------------------------------------------------------
# bounds
# --------------------------------------------------------------------------

SELECTIONS = (("expected", "exact"), ("expected", "moment"), ("exceed", "exact"),
              ("exceed", "chebyshev"), ("exceed", "chernoff"))


def cmd_bounds(opts, command):
    n = opts["n"]
    eps = opts["eps_fp"]
    if opts["lambda"] is not None:
        header = ["n", "lam", "eps_fp", "name", "bits"]
        rows = []
        for e in eps:
            for lam in opts["lambda"]:
                d = bounds.KDistribution.poisson(lam)
                for rule, method in SELECTIONS:
                    try:
                        b = bounds.select_b(rule, d, e, delta=opts["delta"], method=method)
                    except bounds.Unachievable:
                        b = math.nan
                    rows.append({"n": n, "lam": lam, "eps_fp": e,
                                 "name": f"{rule}_{method}", "bits": float(b)})
        _emit(opts, header, rows, command)
        return 0
    ks = opts["k"] if opts["k"] is not None else list(range(10, 301, 10))
    header, rows = figures.fig_bounds(n=n, ks=ks, eps=eps)
    _emit(opts, header, rows, command)
    return 0


# --------------------------------------------------------------------------
# codec
# --------------------------------------------------------------------------

def scheme_config(name: str, opts, k: int) -> SchemeConfig:
    n, k_max = opts["n"], opts["k_max"]
    eps = _one(opts, "eps_fp")
    bits = _one(opts, "bits") if opts["bits"] is not None else None
    seed = codec.DEFAULT_SEED
    if name == "le":
        if bits is not None:
            return SchemeConfig.le_fixed(bits, k_max=k_max, n=n, seed=seed)
        return SchemeConfig.le(eps, k_max=k_max, n=n, seed=seed)
    if name == "bloom":
        if bits is not None:
            return SchemeConfig.bloom(bits, k_design=max(k, 1), n=n, seed=seed)
        return SchemeConfig.bloom_for(eps, max(k, 1), n=n, seed=seed)
    if name == "hashconcat":
        return SchemeConfig.hashconcat(eps, max(k, 1), n=n, seed=seed)
    if name == "enumerative":
        return SchemeConfig.enumerative(n, k_max=k_max, bits=bits, seed=seed)
    if name == "naive":
        return SchemeConfig.naive(bits=bits, k_max=k_max, n=n, seed=seed)
    raise UsageError(f"unknown scheme {name!r}")


CODEC_HEADER = ["scheme", "n", "k", "eps_fp", "payload_bits", "frame_bits", "encodes",
                "encode_ms", "decode_us", "probes", "fp_events", "fp_rate", "fp_expected",
                "fn_events", "retried_encodes"]


def cmd_codec(opts, command):
    schemes = opts["scheme"] or ["le"]
    ks = opts["k"] or [100]
    encodes = opts["trials"] or 100
    rows = []
    for name in schemes:
        for k in ks:
            cfg = scheme_config(name, opts, k)
            rng = np.random.default_rng(opts["seed"])
            t_enc = t_dec = 0.0
            fp = fn = probes = retried = 0
            msg = None
            for _ in range(encodes):
                s = DecodedSet.random(cfg.n, k, rng)
                t0 = time.perf_counter()
                msg = codec.encode(s, cfg)
                t_enc += time.perf_counter() - t0
                retried += bool(msg.trial)
                fn += int(k - codec.decode_many(msg, s.as_array(), cfg).sum())
                q = codec.sample_ids(cfg.n, opts["probes"], rng, exclude=s.as_array())
                t0 = time.perf_counter()
                fp += int(codec.decode_many(msg, q, cfg).sum())
                t_dec += time.perf_counter() - t0
                probes += len(q)
            rows.append({
                "scheme": name, "n": cfg.n, "k": k, "eps_fp": cfg.eps_fp,
                "payload_bits": msg.payload_bits, "frame_bits": msg.frame(cfg)[1],
                "encodes": encodes, "encode_ms": 1e3 * t_enc / encodes,
                "decode_us": 1e6 * t_dec / max(probes, 1), "probes": probes,
                "fp_events": fp, "fp_rate": fp / probes if probes else math.nan,
                "fp_expected": cfg.expected_fp(min(k, cfg.capacity())),
                "fn_events": fn, "retried_encodes": retried,
            })
    _emit(opts, CODEC_HEADER, rows, command)
    return 0


# --------------------------------------------------------------------------
# arq
# --------------------------------------------------------------------------

ARQ_HEADER = ["eps_ul", "eps_dl", "eps_fp", "eps_fn", "rounds", "pr_fail", "limit", "ell"]
EPS_DL_GRID = [float(v) for v in 10.0 ** np.arange(-3.0, 0.01, 0.25)]


def cmd_arq(opts, command):
    if opts["snr_db"] is not None:
        return _arq_fading(opts, command)
    rows = []
    for ul in opts["eps_ul"]:
        for fp in opts["eps_fp"]:
            for fn in opts["eps_fn"]:
                for L in opts["rounds"]:
                    for dl in opts["eps_dl"] or EPS_DL_GRID:
                        p = arq.ArqParams(ul, dl, fp, fn, L)
                        rows.append({"eps_ul": ul, "eps_dl": dl, "eps_fp": fp, "eps_fn": fn,
                                     "rounds": L, "pr_fail": arq.pr_fail(p),
                                     "limit": arq.pr_fail_limit(p), "ell": p.ell})
    _emit(opts, ARQ_HEADER, rows, command)
    return 0


def _arq_fading(opts, command):
    """Optimised B per scheme, or the full pr_fail(B) curve when ``--bits`` is given."""
    lam = _one(opts, "lambda") if opts["lambda"] is not None else 100.0
    schemes = opts["scheme"] or ["naive", "ef", "le", "lb"]
    rows = []
    if opts["bits"] is not None:
        header = ["snr_db", "lam", "eps_ul", "rounds", "scheme", "B", "pr_fail", "eps_dl",
                  "eps_fp", "eps_fn"]
    else:
        header = ["snr_db", "lam", "eps_ul", "rounds"] + figures.OPT_HEADER[:6]
    for db in opts["snr_db"]:
        ch = arq.FadingChannel.from_db(db, opts["antennas"], opts["symbols"])
        for ul in opts["eps_ul"]:
            for L in opts["rounds"]:
                for s in schemes:
                    model = arq.SchemeModel(s, n=opts["n"])
                    base = {"snr_db": db, "lam": lam, "eps_ul": ul, "rounds": L}
                    if opts["bits"] is not None:
                        for b in opts["bits"]:
                            r = arq.expected_pr_fail(model, b, ch, lam, ul, L)
                            rows.append({**base, "scheme": s, **r})
                    else:
                        opt = arq.optimize_b(model, ch, lam, ul, L)
                        rows.append(figures._optimum_row(opt, **base))
    _emit(opts, header, rows, command)
    return 0


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

SIM_HEADER = ["scheme", "mode", "k", "lam", "eps_ul", "eps_dl", "snr_db", "rounds", "trials",
              "seed", "pr_fail", "pr_fail_se", "eps_fp", "eps_fp_se", "eps_fn", "eps_fn_se",
              "analytic", "agrees", "capacity_events", "encode_failures", "encodes"]


def cmd_simulate(opts, command):
    name = (opts["scheme"] or ["le"])[0]
    if opts["k"] is None and opts["lambda"] is None:
        raise UsageError("simulate needs --k or --lambda")
    if opts["k"] is not None and opts["lambda"] is not None:
        raise UsageError("give only one of --k and --lambda")
    k = _one(opts, "k") if opts["k"] is not None else None
    lam = _one(opts, "lambda") if opts["lambda"] is not None else None
    k_cfg = k if k is not None else max(1, math.ceil(lam))
    cfg_s = scheme_config(name, opts, k_cfg)
    channel = None
    dl = _one(opts, "eps_dl") if opts["eps_dl"] is not None else 0.0
    if opts["snr_db"] is not None:
        channel = arq.FadingChannel.from_db(_one(opts, "snr_db"), opts["antennas"],
                                            opts["symbols"])
    trials = opts["trials"] or 10_000
    cfg = sim.SimConfig(cfg_s, k=k, lam=lam, eps_ul=_one(opts, "eps_ul"), eps_dl=dl,
                        channel=channel, rounds=_one(opts, "rounds"), trials=trials,
                        seed=opts["seed"], probes=opts["probes"])
    if opts["mode"] == "fp":
        rep = sim.run_fp_trial(cfg, workers=opts["workers"])
        ok = sim.agrees(rep.fp_events, rep.fp_trials, rep.analytic)
    elif opts["mode"] == "arq":
        rep = sim.run_arq_trial(cfg, workers=opts["workers"])
        ok = sim.agrees(rep.failures, rep.trials, rep.analytic)
    else:
        raise UsageError(f"unknown mode {opts['mode']!r}")
    row = {**rep.summary(), "scheme": name, "mode": opts["mode"], "k": k, "lam": lam,
           "eps_ul": cfg.eps_ul, "eps_dl": None if channel else dl,
           "snr_db": channel.snr_db if channel else None, "rounds": cfg.rounds,
           "seed": cfg.seed, "agrees": ok}
    _emit(opts, SIM_HEADER, [row], command)
    return 0


# --------------------------------------------------------------------------
# reproduce
# --------------------------------------------------------------------------

def cmd_reproduce(opts, command):
    fig = opts["figure"]
    if fig is None:
        raise UsageError(f"choose a figure: {', '.join(figures.figure_ids())}")
    try:
        paths = figures.reproduce(fig, opts["out"] or ".", seed=opts["seed"],
                                  trials=opts["trials"] or 0, plot=not opts["no_plot"],
                                  workers=opts["workers"], command=command)
    except figures.UnknownFigure as exc:
        raise UsageError(exc.args[0]) from None
    for kind, p in paths.items():
        print(f"{kind}: {p}")
    return 0


COMMANDS = {"bounds": cmd_bounds, "codec": cmd_codec, "arq": cmd_arq,
            "simulate": cmd_simulate, "reproduce": cmd_reproduce}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("shared options")
    g.add_argument("--config", help="flat JSON file of option values")
    g.add_argument("--n", type=int, help="population size N (default 2^32)")
    g.add_argument("--k", help="decoded users K; list a,b or range start:stop:step")
    g.add_argument("--lambda", dest="lambda", help="Poisson mean of K")
    g.add_argument("--k-max", type=int, help="K budget K' (default 1023)")
    g.add_argument("--eps-fp", help="false-positive target(s)")
    g.add_argument("--eps-fn", help="false-negative probability(ies)")
    g.add_argument("--eps-ul", help="uplink erasure probability(ies)")
    g.add_argument("--eps-dl", help="downlink erasure probability(ies)")
    g.add_argument("--snr-db", help="mean downlink SNR in dB (fading channel)")
    g.add_argument("--antennas", type=int, help="BS antennas, Gamma shape (default 64)")
    g.add_argument("--symbols", type=int, help="channel symbols for feedback (default 2048)")
    g.add_argument("--rounds", help="transmission rounds L")
    g.add_argument("--bits", help="fixed message length B")
    g.add_argument("--delta", type=float, help="exceed-rule probability (bounds)")
    g.add_argument("--trials", type=int, help="Monte-Carlo trials / encodes")
    g.add_argument("--probes", type=int, help="non-member probes per encoded set")
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--scheme", help="le, bloom, hashconcat, enumerative, naive "
                                    "(arq: le, lb, naive, ef, bloom)")
    g.add_argument("--mode", choices=("arq", "fp"), help="simulate: experiment kind")
    g.add_argument("--workers", type=int, help="worker processes for simulations")
    g.add_argument("--out", help="output CSV (default stdout) or directory for reproduce")

    p = argparse.ArgumentParser(prog="massarq", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("bounds", parents=[common], help="message-length bounds as CSV")
    sub.add_parser("codec", parents=[common], help="encode/decode timing and measured fp")
    sub.add_parser("arq", parents=[common], help="L-round failure analytics")
    sub.add_parser("simulate", parents=[common], help="Monte-Carlo run vs analytic value")
    rp = sub.add_parser("reproduce", parents=[common], help="figure data, manifest and plot")
    rp.add_argument("figure", nargs="?", help=", ".join(figures.FIGURES))
    rp.add_argument("--no-plot", action="store_true", help="skip the PNG")
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        opts = resolve(args)
        return COMMANDS[args.command](opts, ["massarq", *argv])
    except UsageError as exc:
        print(f"massarq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (bounds.DomainError, bounds.Unachievable, codec.CodecError, ValueError) as exc:
        print(f"massarq: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    raise SystemExit(main())

"""Monte-Carlo validation with the real codecs in the loop.

Two experiments:

``run_fp_trial``
    Draw K, draw a uniform K-subset, encode it, then probe members (false
    negatives) and random non-members (false positives).
``run_arq_trial``
    Follow tagged users through up to L rounds.  Each trial fixes K for its
    duration; in every round the BS decodes the tagged user with probability
    ``1 - eps_ul`` and broadcasts feedback for a decoded set of size K made
    of the tagged user (if decoded) and fresh background users.

Trials are processed in blocks of ``block`` trials whose random streams are
seeded by ``mix_seed(seed, block_index)``, so results do not depend on the
order in which blocks run or on how many workers run them.  Within an ARQ
block, tagged users that share K in the same round are packed into common
frames; each frame is one real encode serving up to K tagged users.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import codec
from ._mathutil import poisson_support
from .arq import FadingChannel, outage, pr_fail_array
from .bounds import KDistribution
from .codec import DecodedSet, SchemeConfig
from .hashing import mix_seed

DEFAULT_BLOCK = 1 << 16
Z_GATE = 3.0
SMALL_COUNT = 25.0


@dataclass(frozen=True)
class SimConfig:
    """One Monte-Carlo experiment.

    Exactly one of ``k`` (fixed), ``lam`` (Poisson) or ``activation``
    (independent per-user activation probabilities) sets the law of K.
    Either ``eps_dl`` or a fading ``channel`` models the downlink.
    """

    scheme: SchemeConfig
    k: int | None = None
    lam: float | None = None
    activation: tuple[float, ...] | None = None
    eps_ul: float = 0.0
    eps_dl: float = 0.0
    channel: FadingChannel | None = None
    rounds: int = 1
    trials: int = 10_000
    seed: int = 1
    probes: int = 100
    block: int = DEFAULT_BLOCK

    def __post_init__(self):
        given = [v is not None for v in (self.k, self.lam, self.activation)]
        if sum(given) != 1:
            raise ValueError("set exactly one of k, lam, activation")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0 <= self.eps_ul <= 1 or not 0 <= self.eps_dl <= 1:
            raise ValueError("erasure probabilities must lie in [0, 1]")
        if self.block < 1:
            raise ValueError("block must be >= 1")

    @property
    def n(self) -> int:
        return self.scheme.n

    def k_distribution(self) -> KDistribution:
        if self.k is not None:
            return KDistribution.fixed(self.k)
        if self.lam is not None:
            return KDistribution.poisson(self.lam, tail=1e-15)
        return KDistribution.bernoulli(self.activation)

    def sample_k(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.k is not None:
            return np.full(size, self.k, dtype=np.int64)
        if self.lam is not None:
            # inversion on the (tail-truncated) cdf
            ks, p = poisson_support(self.lam, 1e-15)
            cdf = np.cumsum(p)
            idx = np.searchsorted(cdf / cdf[-1], rng.random(size), side="right")
            return ks[np.minimum(idx, len(ks) - 1)]
        ps = np.asarray(self.activation)
        return (rng.random((size, len(ps))) < ps).sum(axis=1)

    def downlink_bits(self, k: int) -> int:
        if self.scheme.bits is not None:
            return self.scheme.bits
        return self.scheme.payload_bits(min(k, self.scheme.capacity()))

    def eps_dl_for(self, k: int) -> float:
        if self.channel is None:
            return self.eps_dl
        return outage(self.channel, self.downlink_bits(k))

    # analytic counterparts -------------------------------------------------

    def analytic_fp(self) -> float:
        """``E_K[fp(K)]`` with the codec's own expected false-positive rate."""
        d = self.k_distribution()
        cap = self.scheme.capacity()
        return d.expect(lambda ks: np.array([self.scheme.expected_fp(min(int(v), cap))
                                             for v in ks]))

    def analytic_fn(self) -> float:
        """Pooled false-negative rate ``E[(K - cap)^+] / E[K]``."""
        d = self.k_distribution()
        cap = self.scheme.capacity()
        if d.mean == 0:
            return 0.0
        return d.expect(lambda ks: np.maximum(ks - cap, 0)) / d.mean

    def analytic_pr_fail(self) -> float:
        d = self.k_distribution()
        cap = self.scheme.capacity()
        ks = d.values
        fp = np.array([self.scheme.expected_fp(min(int(v), cap)) for v in ks])
        fn = np.array([self.scheme.expected_fn(max(int(v), 1)) for v in ks])
        dl = np.array([self.eps_dl_for(max(int(v), 1)) for v in ks])
        pf = pr_fail_array(self.eps_ul, dl, fp, fn, self.rounds)
        return math.fsum(d.probs * pf) / math.fsum(d.probs)


@dataclass
class SimReport:
    """Counts from a run; rates and binomial standard errors are derived."""

    trials: int = 0
    failures: int = 0
    fp_events: int = 0
    fp_trials: int = 0
    fn_events: int = 0
    fn_trials: int = 0
    capacity_events: int = 0
    encode_failures: int = 0
    encodes: int = 0
    active: list = field(default_factory=list)
    uplink_ok: list = field(default_factory=list)
    acked: list = field(default_factory=list)
    analytic: float | None = None

    def merge(self, other: "SimReport") -> "SimReport":
        def add(a, b):
            n = max(len(a), len(b))
            return [(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)]

        return SimReport(
            self.trials + other.trials, self.failures + other.failures,
            self.fp_events + other.fp_events, self.fp_trials + other.fp_trials,
            self.fn_events + other.fn_events, self.fn_trials + other.fn_trials,
            self.capacity_events + other.capacity_events,
            self.encode_failures + other.encode_failures,
            self.encodes + other.encodes,
            add(self.active, other.active), add(self.uplink_ok, other.uplink_ok),
            add(self.acked, other.acked),
            self.analytic if self.analytic is not None else other.analytic,
        )

    @property
    def pr_fail(self) -> float:
        return _rate(self.failures, self.trials)

    @property
    def pr_fail_se(self) -> float:
        return _se(self.failures, self.trials)

    @property
    def eps_fp(self) -> float:
        return _rate(self.fp_events, self.fp_trials)

    @property
    def eps_fp_se(self) -> float:
        return _se(self.fp_events, self.fp_trials)

    @property
    def eps_fn(self) -> float:
        return _rate(self.fn_events, self.fn_trials)

    @property
    def eps_fn_se(self) -> float:
        return _se(self.fn_events, self.fn_trials)

    def summary(self) -> dict:
        out = asdict(self)
        for name in ("pr_fail", "pr_fail_se", "eps_fp", "eps_fp_se", "eps_fn", "eps_fn_se"):
            out[name] = getattr(self, name)
        return out


def _rate(k, n):
    return k / n if n else float("nan")


def _se(k, n):
    if not n:
        return float("nan")
    p = k / n
    return math.sqrt(p * (1 - p) / n)


def agrees(events: int, n: int, p: float, z: float = Z_GATE) -> bool:
    """Whether ``events`` out of ``n`` is consistent with probability ``p``.

    Uses ``|events/n - p| <= z * sqrt(p(1-p)/n)`` when ``n p`` is large; for
    small expected counts the normal approximation is poor and the exact
    binomial tails are compared against the same two-sided level.
    """
    if n == 0:
        return True
    if p <= 0.0:
        return events == 0
    if p >= 1.0:
        return events == n
    mean = n * p
    if min(mean, n - mean) >= SMALL_COUNT:
        return abs(events / n - p) <= z * math.sqrt(p * (1 - p) / n)
    from scipy.stats import binom, norm

    level = norm.sf(z)
    return binom.sf(events - 1, n, p) >= level and binom.cdf(events, n, p) >= level


def trials_for(p: float, floor: int = 100_000, per_event: float = 40.0,
               cap: int | None = None) -> int:
    """Trial count that expects about ``per_event`` events at probability ``p``."""
    n = floor if p <= 0 else max(floor, math.ceil(per_event / p))
    return n if cap is None else min(n, cap)


# --------------------------------------------------------------------------
# runner plumbing
# --------------------------------------------------------------------------

def _blocks(cfg: SimConfig):
    full, rest = divmod(cfg.trials, cfg.block)
    sizes = [cfg.block] * full + ([rest] if rest else [])
    return list(enumerate(sizes))


def _run_blocks(fn, cfg: SimConfig, workers: int) -> SimReport:
    jobs = _blocks(cfg)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(fn, [cfg] * len(jobs), [j[0] for j in jobs],
                                [j[1] for j in jobs]))
    else:
        parts = [fn(cfg, i, n) for i, n in jobs]
    out = SimReport()
    for p in parts:
        out = out.merge(p)
    return out


def _draw_set(cfg: SimConfig, k: int, rng, fixed=None, exclude=None):
    """Decoded set of size ``k`` containing ``fixed`` plus uniform others."""
    fixed = np.empty(0, dtype=np.uint64) if fixed is None else np.asarray(fixed, np.uint64)
    need = k - len(fixed)
    excl = fixed if exclude is None else np.concatenate([fixed, np.asarray(exclude, np.uint64)])
    others = codec.sample_ids(cfg.n, need, rng, exclude=excl if len(excl) else None)
    ids = np.sort(np.concatenate([fixed, others]))
    return DecodedSet(cfg.n, tuple(int(v) for v in ids))


def _encode(cfg: SimConfig, s: DecodedSet, rng, rep: SimReport):
    cap = cfg.scheme.capacity()
    if s.k > cap:
        rep.capacity_events += 1
        s = codec.drop_excess(s, cap, rng)
    rep.encodes += 1
    try:
        return codec.encode(s, cfg.scheme)
    except codec.EncodingFailed:
        rep.encode_failures += 1
        return None


# --------------------------------------------------------------------------
# false-positive experiment
# --------------------------------------------------------------------------

def _fp_block(cfg: SimConfig, index: int, n_sets: int) -> SimReport:
    rng = np.random.default_rng(mix_seed(cfg.seed, index))
    rep = SimReport(trials=n_sets)
    ks = cfg.sample_k(rng, n_sets)
    for k in ks:
        s = _draw_set(cfg, int(k), rng)
        msg = _encode(cfg, s, rng, rep)
        if s.k:
            hit = codec.decode_many(msg, s.as_array(), cfg.scheme)
            rep.fn_events += int(s.k - hit.sum())
            rep.fn_trials += s.k
        probes = codec.sample_ids(cfg.n, cfg.probes, rng, exclude=s.as_array())
        probes = rng.permutation(probes)
        rep.fp_events += int(codec.decode_many(msg, probes, cfg.scheme).sum())
        rep.fp_trials += len(probes)
    return rep


def run_fp_trial(cfg: SimConfig, workers: int = 1) -> SimReport:
    """Empirical false-positive and false-negative rates of ``cfg.scheme``.

    ``cfg.trials`` sets are encoded and ``cfg.probes`` non-members probed
    against each.
    """
    rep = _run_blocks(_fp_block, cfg, workers)
    rep.analytic = cfg.analytic_fp()
    return rep


# --------------------------------------------------------------------------
# ARQ experiment
# --------------------------------------------------------------------------

def _arq_block(cfg: SimConfig, index: int, n_trials: int) -> SimReport:
    rng = np.random.default_rng(mix_seed(cfg.seed, index))
    rep = SimReport(trials=n_trials)
    ks = cfg.sample_k(rng, n_trials)
    tags = rng.permutation(codec.sample_ids(cfg.n, n_trials, rng))
    active = np.ones(n_trials, dtype=bool)
    failed = np.zeros(n_trials, dtype=bool)
    for _ in range(cfg.rounds):
        idx = np.flatnonzero(active)
        if not len(idx):
            break
        decoded = rng.random(len(idx)) >= cfg.eps_ul
        rep.active.append(len(idx))
        rep.uplink_ok.append(int(decoded.sum()))
        snr = cfg.channel.sample_snr(rng, len(idx)) if cfg.channel is not None else None
        lost = rng.random(len(idx)) < cfg.eps_dl if cfg.channel is None else None
        ack = np.zeros(len(idx), dtype=bool)

        order = np.argsort(ks[idx], kind="stable")
        k_sorted = ks[idx][order]
        cuts = np.flatnonzero(np.diff(k_sorted)) + 1
        for pos in np.split(order, cuts):
            kv = int(ks[idx[pos[0]]])
            size = max(kv, 1)
            n_frames = -(-len(pos) // size)
            mem_pos = pos[decoded[pos]]
            probe_pos = pos[~decoded[pos]]
            for f in range(n_frames):
                mp = mem_pos[f::n_frames]
                pp = probe_pos[f::n_frames]
                if not len(mp) and not len(pp):
                    continue
                s = _draw_set(cfg, max(kv, len(mp)), rng, fixed=tags[idx[mp]],
                              exclude=tags[idx[pp]])
                msg = _encode(cfg, s, rng, rep)
                q = np.concatenate([mp, pp])
                dec = codec.decode_many(msg, tags[idx[q]], cfg.scheme)
                if snr is not None:
                    bits = cfg.scheme.bits if cfg.scheme.bits is not None else \
                        (msg.payload_bits if msg is not None else 0)
                    erased = snr[q] < cfg.channel.threshold(bits) if bits else \
                        np.zeros(len(q), dtype=bool)
                else:
                    erased = lost[q]
                if msg is None:
                    erased = np.ones(len(q), dtype=bool)
                got = dec & ~erased
                ack[q] = got
                nm = len(mp)
                rep.fn_events += int((~dec[:nm] & ~erased[:nm]).sum())
                rep.fn_trials += int((~erased[:nm]).sum())
                rep.fp_events += int(got[nm:].sum())
                rep.fp_trials += int((~erased[nm:]).sum())
        rep.acked.append(int(ack.sum()))
        failed[idx[ack & ~decoded]] = True
        active[idx[ack]] = False
    failed |= active
    rep.failures = int(failed.sum())
    return rep


def run_arq_trial(cfg: SimConfig, workers: int = 1) -> SimReport:
    """Empirical failure probability of the L-round protocol."""
    rep = _run_blocks(_arq_block, cfg, workers)
    rep.analytic = cfg.analytic_pr_fail()
    return rep


def codec_for(scheme: str, bits: int, n: int = 1 << 32, k_design: int | None = None,
              **kw) -> SchemeConfig:
    """Real codec behind an analytic fixed-B scheme model (see ``arq.SchemeModel``)."""
    if scheme == "le":
        return SchemeConfig.le_fixed(bits, **kw)
    if scheme == "naive":
        return SchemeConfig.naive(bits=bits, **kw)
    if scheme == "ef":
        return SchemeConfig.enumerative(n, bits=bits, **kw)
    if scheme == "bloom":
        return SchemeConfig.bloom(bits, k_design=k_design or 1, n=n, **kw)
    raise ValueError(f"no codec implements scheme {scheme!r}")


def with_trials(cfg: SimConfig, trials: int) -> SimConfig:
    return replace(cfg, trials=trials)


def reproduce(figure: str, out_dir, **kw):
    """Write the data (and plot) for ``figure``; see :mod:`massarq.figures`."""
    from .figures import reproduce as _reproduce

    return _reproduce(figure, out_dir, **kw)

import numpy as np
import pytest
from scipy.stats import binom, chisquare, norm

from massarq import gf, hashing
from massarq.hashing import HashFamilySpec, HashSeed

from golden_cases import HASH_CASES


def not_above(events, n, p, z=3.0):
    """One-sided 3 sigma check; exact binomial tail when n p is small."""
    if n * p >= 25:
        return events / n <= p + z * np.sqrt(p * (1 - p) / n)
    return binom.sf(events - 1, n, p) >= norm.sf(z)


def test_splitmix_reference_outputs():
    # first outputs of the splitmix64 generator started from state 0
    g = hashing.GOLDEN
    assert hashing.mix64(g) == 0xE220A8397B1DCDAF
    assert hashing.mix64(2 * g) == 0x6E789E6AA1B965F4
    assert hashing.mix64(3 * g) == 0x06C45D188009454F


def test_golden_vectors(data_dir):
    assert hashing.verify_golden(data_dir / "hash_golden.csv") == []


def test_golden_file_covers_cases(data_dir):
    rows = (data_dir / "hash_golden.csv").read_text().splitlines()
    assert rows[0] == ",".join(hashing.GOLDEN_HEADER)
    assert len(rows) == len(HASH_CASES) + 1


def test_universal_deterministic():
    hs = HashSeed(99, 2)
    assert hashing.universal_hash(12345, 16, hs) == hashing.universal_hash(12345, 16, hs)


@pytest.mark.parametrize("m", [1, 7, 16, 33, 64])
def test_universal_scalar_matches_array(m, rng):
    hs = HashSeed(7, 1)
    xs = rng.integers(0, 2**63, 500, dtype=np.uint64)
    arr = hashing.universal_hash_array(xs, m, hs)
    assert [int(v) for v in arr] == [hashing.universal_hash(int(x), m, hs) for x in xs]
    assert int(arr.max()) < 2**m


def test_prf_scalar_matches_array(rng):
    hs = HashSeed(3, 4)
    xs = rng.integers(0, 2**32, 50, dtype=np.uint64)
    for b in (1, 7, 16, 32):
        rows = hashing.prf_rows(xs, 6, b, hs)
        for x, row in zip(xs, rows):
            assert row.tolist() == hashing.prf_row(int(x), 6, gf.field_spec(b), hs).tolist()


@pytest.mark.parametrize("m", [8, 16, 24])
def test_universal_collision_rate(m):
    """Random seed per pair; 10^6 pairs; collisions <= 2^-m + 3 sigma."""
    rng = np.random.default_rng(m)
    n = 1_000_000
    x = rng.integers(0, 2**64, n, dtype=np.uint64)
    y = rng.integers(0, 2**64, n, dtype=np.uint64)
    y = np.where(x == y, y + np.uint64(1), y)
    # a block of pairs shares one seed; 1000 seeds
    hits = 0
    for i, s in enumerate(rng.integers(0, 2**63, 1000)):
        sl = slice(i * 1000, (i + 1) * 1000)
        hs = HashSeed(int(s))
        hits += int((hashing.universal_hash_array(x[sl], m, hs)
                     == hashing.universal_hash_array(y[sl], m, hs)).sum())
    assert not_above(hits, n, 2.0 ** -m)


def test_trial_avalanche(rng):
    xs = rng.integers(0, 2**32, 10_000, dtype=np.uint64)
    a = hashing.universal_hash_array(xs, 32, HashSeed(11, 0))
    b = hashing.universal_hash_array(xs, 32, HashSeed(11, 1))
    assert (a != b).mean() >= 0.99
    ra = hashing.prf_rows(xs, 1, 32, HashSeed(11, 0))[:, 0]
    rb = hashing.prf_rows(xs, 1, 32, HashSeed(11, 1))[:, 0]
    assert (ra != rb).mean() >= 0.99


def test_prf_chi_square_b7():
    xs = np.arange(1_000_000, dtype=np.uint64)
    rows = hashing.prf_rows(xs, 3, 7, HashSeed(5))
    for j in range(3):
        counts = np.bincount(rows[:, j], minlength=128)
        assert chisquare(counts).pvalue > 1e-3


def test_bloom_positions_range(rng):
    xs = rng.integers(0, 2**32, 1000, dtype=np.uint64)
    pos = hashing.bloom_positions(xs, 977, 5, HashSeed(1))
    assert pos.shape == (1000, 5)
    assert pos.min() >= 0 and pos.max() < 977
    counts = np.bincount(pos.ravel(), minlength=977)
    assert chisquare(counts).pvalue > 1e-3


def test_seed_validation():
    with pytest.raises(ValueError):
        HashSeed(-1)
    with pytest.raises(ValueError):
        HashSeed(1, -1)
    assert HashSeed(1, 2).next_trial() == HashSeed(1, 3)


def test_family_spec():
    assert HashFamilySpec("universal", 2**64, 16).out_range == 65536
    with pytest.raises(ValueError):
        HashFamilySpec("cryptographic", 2**32, 8)
    with pytest.raises(ValueError):
        HashFamilySpec("universal", 2**32, 65)


def test_mix_seed_distinct():
    seeds = {hashing.mix_seed(1, i) for i in range(10_000)}
    assert len(seeds) == 10_000
    assert hashing.mix_seed(1, 0) != hashing.mix_seed(2, 0)


def test_mix64_bijective_sample(rng):
    xs = rng.integers(0, 2**63, 20_000)
    assert len({hashing.mix64(int(x)) for x in xs}) == len(set(xs.tolist()))

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tmatrix import primes
from tmatrix.errors import BudgetError, DomainError, UsageError, WidthError
from tmatrix.primes import PrimeCache, is_prime, nth_prime, p_seq, pi, prime_index, sieve_range


def trial(n):
    if n < 2:
        return False
    return all(n % d for d in range(2, int(n**0.5) + 1))


@pytest.fixture(scope="module")
def small_cache():
    return PrimeCache(segment_size=1 << 10)


@pytest.mark.parametrize("lo,hi,expected", [(2, 10, [2, 3, 5, 7]), (9, 16, [11, 13]), (24, 25, [])])
def test_sieve_range_examples(lo, hi, expected):
    assert sieve_range(lo, hi).tolist() == expected


def test_sieve_range_errors():
    with pytest.raises(UsageError):
        sieve_range(10, 9)
    with pytest.raises(BudgetError):
        sieve_range(2, 10**6, max_span=1000)
    with pytest.raises(WidthError):
        sieve_range(2**64 - 10, 2**64)


def test_sieve_range_partition_matches_whole():
    whole = sieve_range(2, 200_000, segment_size=1 << 10).tolist()
    cuts = [2, 3, 97, 1024, 1025, 65_537, 131_071, 200_001]
    parts = [sieve_range(a, b - 1, segment_size=1 << 10).tolist() for a, b in zip(cuts, cuts[1:])]
    assert list(itertools.chain(*parts)) == whole


def test_sieve_range_near_64_bits():
    lo = 2**62
    got = sieve_range(lo, lo + 2000).tolist()
    assert got == [v for v in range(lo, lo + 2001) if is_prime(v)]
    assert got  # the interval is not prime-free


@pytest.mark.parametrize("v,expected", [(0, False), (1, False), (25, False), (10**9 + 7, True),
                                        (2, True), (3, True), (561, False)])
def test_is_prime_examples(v, expected):
    assert is_prime(v) is expected


def test_is_prime_strong_pseudoprimes():
    # strong pseudoprimes to many small bases
    for n in (3215031751, 3825123056546413051, 318665857834031151167461):
        if n < 2**64:
            assert not is_prime(n)
    assert is_prime(2**61 - 1)
    assert is_prime(18446744073709551557)  # largest 64-bit prime


def test_is_prime_width():
    with pytest.raises(WidthError):
        is_prime(2**64)
    with pytest.raises(DomainError):
        is_prime(-3)


@given(st.integers(min_value=0, max_value=2 * 10**6))
def test_is_prime_matches_trial_division(v):
    assert is_prime(v) == trial(v)


@pytest.mark.parametrize("x,expected", [(3, 2), (10, 4), (100, 25), (10.5, 4), (1, 0), (2, 1)])
def test_pi_examples(x, expected):
    assert pi(x) == expected


def test_pi_matches_trial_division_count(small_cache):
    flags = [trial(v) for v in range(100_001)]
    counts = list(itertools.accumulate(flags))
    xs = np.arange(0, 100_001)
    for x in xs[::7].tolist() + [100_000]:
        assert small_cache.pi(x) == counts[x]


@pytest.mark.parametrize("i,expected", [(1, 2), (3, 5), (10, 29)])
def test_nth_prime_examples(i, expected):
    assert nth_prime(i) == expected


@pytest.mark.parametrize("k,expected", [(1, 5), (2, 7), (5, 17)])
def test_p_seq_examples(k, expected):
    assert p_seq(k) == expected


@pytest.mark.parametrize("p,expected", [(2, 1), (11, 5), (17, 7)])
def test_prime_index_examples(p, expected):
    assert prime_index(p) == expected


def test_prime_index_rejects_composites():
    with pytest.raises(DomainError):
        prime_index(21)


def test_prime_index_inverts_nth_prime(small_cache):
    for i in range(1, 20_000, 13):
        assert small_cache.prime_index(small_cache.nth_prime(i)) == i


def test_p_seq_strictly_increasing():
    seq = p_seq(np.arange(1, 5000))
    assert seq[0] == 5
    assert np.all(np.diff(seq) > 0)
    assert seq.tolist()[:6] == [5, 7, 11, 13, 17, 19]


def test_cache_invariants(small_cache):
    small_cache.extend_to(50_000)
    cum = small_cache._cum
    assert all(a <= b for a, b in zip(cum, cum[1:]))
    bits = sum(int(np.unpackbits(b).sum()) for b in small_cache._bits)
    assert cum[-1] == bits + 1  # the prime 2 is not in the odd bitset
    assert small_cache.count == small_cache.pi(small_cache.watermark)


def test_cache_queries(small_cache):
    assert small_cache.prev_prime(100) == 97
    assert small_cache.next_prime(100) == 101
    assert small_cache.next_primes(7, 4).tolist() == [11, 13, 17, 19]
    assert small_cache.primes_between(90, 110).tolist() == [97, 101, 103, 107, 109]
    assert small_cache.nth_primes([1, 2, 3, 10]).tolist() == [2, 3, 5, 29]
    assert small_cache.pi_array(np.array([1, 2, 10, 100])).tolist() == [0, 1, 4, 25]
    with pytest.raises(DomainError):
        small_cache.prev_prime(2)


def test_window_cache_agrees_with_full_cache(small_cache):
    start = 123_457
    window = PrimeCache(segment_size=1 << 10, start=start, count_before=small_cache.pi(start - 1))
    for x in range(start, start + 30_000, 97):
        assert window.pi(x) == small_cache.pi(x)
    i = small_cache.pi(start) + 5
    assert window.nth_prime(i) == small_cache.nth_prime(i)
    assert window.prev_prime(start + 100) == small_cache.prev_prime(start + 100)
    with pytest.raises(BudgetError):
        window.pi(start - 10)
    with pytest.raises(BudgetError):
        window.nth_prime(3)


def test_budget_errors():
    cache = PrimeCache(segment_size=1 << 10, limit=10_000)
    with pytest.raises(BudgetError):
        cache.pi(10**6)
    with pytest.raises(BudgetError):
        cache.nth_prime(10**6)


def test_count_range():
    assert primes.count_range(2, 10**6, segment_size=1 << 12) == 78498
    assert primes.count_range(10, 20) == 4
    assert primes.count_range(5, 4) == 0


def test_save_load_roundtrip(tmp_path, small_cache):
    path = tmp_path / "cache.npz"
    small_cache.extend_to(70_000)
    small_cache.save(path)
    loaded = PrimeCache.load(path)
    assert loaded.watermark == small_cache.watermark
    assert loaded.pi(69_999) == small_cache.pi(69_999)
    assert loaded.nth_prime(5000) == small_cache.nth_prime(5000)


@settings(max_examples=50)
@given(st.integers(min_value=2, max_value=300_000), st.integers(min_value=0, max_value=5000))
def test_sieve_range_property(lo, width):
    got = sieve_range(lo, lo + width, segment_size=1 << 8).tolist()
    assert got == [v for v in range(lo, lo + width + 1) if is_prime(v)]

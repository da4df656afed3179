import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tmatrix import legendre
from tmatrix.errors import DomainError, EmptySetError, UsageError
from tmatrix.legendre import (BlockResult, Violation, active_set, critical_element, k1,
                              leading_in_interval, min_prime_via_H, q_count, restricted_defining_set,
                              scheme1, verify_range, verify_prime_count_identity, walk_row)
from tmatrix.matrix import upper_defining
from tmatrix.oracle import oracle_primes_between, oracle_record, trial_is_prime
from tmatrix.primes import default_cache, p_seq


@pytest.mark.parametrize("m,expected", [(3, 2), (4, 4), (5, 7), (10, 23)])
def test_k1_examples(m, expected):
    assert k1(m) == expected


@pytest.mark.parametrize("m,expected", [(1, 2), (2, 2), (3, 2), (4, 3), (10, 5)])
def test_q_count_examples(m, expected):
    assert q_count(m) == expected


def test_k1_rejects_small_m():
    with pytest.raises(DomainError):
        k1(2)


def test_scheme1_m3():
    rec, trace = scheme1(3)
    assert (rec.k1, rec.q, list(rec.H), rec.C, rec.k1_next) == (2, 2, [77, 91], 119, 4)
    assert trace.start_leading == 49
    assert trace.terminal_leading == 169
    assert [s.label for s in trace.steps] == [
        "along-row", "down-success", "along-row", "down-success",
        "along-row", "down-failure", "to-leading"]
    assert trace.violations() == []


def test_scheme1_m4():
    rec, _ = scheme1(4)
    assert (rec.k1, list(rec.H), rec.C, rec.k1_next) == (4, [221, 247, 299], 377, 7)


@pytest.mark.parametrize("m,expected", [(3, [77, 91]), (5, [667, 713]),
                                        (10, [97 * q for q in (101, 103, 107, 109, 113)])])
def test_active_set_examples(m, expected):
    assert active_set(m) == expected


@pytest.mark.parametrize("m,expected", [(3, 119), (4, 377), (10, 12319)])
def test_critical_examples(m, expected):
    assert critical_element(m) == expected


def test_restricted_set_examples():
    assert restricted_defining_set(3).members == (77, 91, 119)
    assert restricted_defining_set(4).members == (221, 247, 299, 377)


def test_restricted_set_is_active_set_plus_critical():
    for m in range(3, 200):
        assert restricted_defining_set(m).members == tuple(active_set(m)) + (critical_element(m),)


def test_min_prime_via_H():
    assert min_prime_via_H(3) == (11, False)
    assert min_prime_via_H(4) == (17, False)
    assert min_prime_via_H(5) == (29, False)
    assert min_prime_via_H(10) == (101, False)
    for m in range(3, 300):
        got = min_prime_via_H(m)
        assert got.value == oracle_primes_between(m)[0] or got.degenerate


def test_min_prime_degenerate_singleton():
    # a walk with one success has H = {a}, whose gcd quotient collapses to 1
    cache = default_cache()
    row, m4 = 2, 3**4
    w = walk_row(row, m4, 11**2 + 1, cache)  # 121 fits, 169 does not
    assert w.q == 1
    h = w.values[: w.q].tolist()
    assert h[0] // math.gcd(*h) == 1


def test_empty_active_set_convention():
    cache = default_cache()
    row = 2
    lead = p_seq(row) ** 2
    w = walk_row(row, lead, lead + 1, cache)  # the window holds no landing squares
    assert w.q == 0
    assert w.values.tolist() == [upper_defining(lead)[1]]


def test_min_prime_raises_on_empty(monkeypatch):
    monkeypatch.setattr(legendre, "active_set", lambda m, cache=None: [])
    with pytest.raises(EmptySetError):
        min_prime_via_H(3)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=3, max_value=3000))
def test_walk_matches_oracle(m):
    rec, trace = scheme1(m)
    assert oracle_record(m) == (rec.k1, list(rec.H), rec.C, rec.k1_next)
    assert trace.violations() == []


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=3, max_value=20000))
def test_trace_invariants(m):
    rec, trace = scheme1(m)
    rows = list(trace.rows)
    assert rows[: rec.q] == list(range(rec.k1 + 1, rec.k1 + rec.q + 1))
    assert rows[-1] == rec.k1 + rec.q + 1  # the failing landing row
    assert trace.terminal_leading == p_seq(rec.k1 + rec.q) ** 2
    assert m**4 < trace.terminal_leading < (m + 1) ** 4
    scale = p_seq(rec.k1)
    assert all(v % scale == 0 for v in trace.values)


def test_leading_in_interval():
    assert leading_in_interval(2) == 25
    assert leading_in_interval(3) == 121
    with pytest.raises(DomainError):
        leading_in_interval(1)


@pytest.mark.parametrize("m", [2, 3, 4, 10, 1000])
def test_leading_in_interval_witness(m):
    w = leading_in_interval(m)
    assert w is not None and m**4 < w < (m + 1) ** 4
    r = math.isqrt(w)
    assert r * r == w and m * m < r < (m + 1) ** 2


def test_verify_range_small():
    report = verify_range(3, 3, 1)
    assert report.ok
    assert report.claims == dict.fromkeys(legendre.CLAIMS, "pass")
    assert report.first_violation is None


def test_verify_range_usage_errors():
    with pytest.raises(UsageError):
        verify_range(5, 4, 1)
    with pytest.raises(UsageError):
        verify_range(2, 10, 1)
    with pytest.raises(UsageError):
        verify_range(3, 10, 0)


def test_verify_range_degenerate_list_is_empty():
    report = verify_range(3, 1000)
    assert report.ok and report.degenerate_q1 == []
    d = report.to_dict()
    assert list(d) == ["range", "claims", "degenerate_q1", "first_violation", "elapsed_ms"]
    assert d["range"] == {"from": 3, "to": 1000}


def test_parallel_blocks_agree_with_serial():
    serial = verify_range(100, 400, 1, keep_records=True)
    parallel = verify_range(100, 400, 2, keep_records=True, block_span=20_000)
    assert serial.to_dict() | {"elapsed_ms": 0} == parallel.to_dict() | {"elapsed_ms": 0}
    a = legendre.BlockResult(0, 0)
    for part in legendre.run_blocks(100, 400, 2, keep_records=True, block_span=20_000):
        a = part if a.m_hi == 0 else a.merge(part)
    assert [r.m for r in a.records] == list(range(100, 401))
    assert [r.to_dict() for r in a.records] == [scheme1(m)[0].to_dict() for m in range(100, 401)]


def _block(lo, hi, fails=(), degen=()):
    return BlockResult(lo, hi, {c: Violation(m, c, 0, 1) for m, c in fails}, list(degen))


def test_block_merge_is_associative():
    x = _block(3, 10, [(7, "k1_maximal")], [4])
    y = _block(11, 20, [(12, "k1_maximal"), (15, "critical_formula")])
    z = _block(21, 30, [(22, "critical_formula")], [25])
    left, right = x.merge(y).merge(z), x.merge(y.merge(z))
    assert left == right
    assert left.failures["k1_maximal"].m == 7
    assert left.failures["critical_formula"].m == 15
    assert left.degenerate_q1 == [4, 25]


def test_plan_blocks_cover_range():
    blocks = legendre.plan_blocks(3, 5000, block_span=1 << 16, min_blocks=4)
    assert blocks[0][0] == 3 and blocks[-1][1] == 5000
    assert all(b + 1 == c for (_, b), (c, _) in zip(blocks, blocks[1:]))


@pytest.mark.parametrize("x_max", [3, 10, 100, 10_000])
def test_verify_prime_count_identity(x_max):
    report = verify_prime_count_identity(x_max)
    assert report.ok and report.first_violation is None


def test_verify_prime_count_identity_rejects():
    with pytest.raises(UsageError):
        verify_prime_count_identity(2)


def test_check_m_reports_no_failures():
    cache = default_cache()
    for m in (3, 4, 57, 1234):
        bad, degenerate, rec = legendre.check_m(m, cache)
        assert bad == {} and not degenerate and rec.m == m


def test_active_set_equals_scaled_primes():
    for m in np.arange(3, 500, 7).tolist():
        scale = p_seq(k1(m))
        assert active_set(m) == [scale * q for q in oracle_primes_between(m)]


def test_gcd_of_active_set_is_row_scale():
    for m in range(3, 400):
        h = active_set(m)
        assert math.gcd(*h) == p_seq(k1(m))
        below = next(v for v in range(m * m - 1, 1, -1) if trial_is_prime(v))
        assert p_seq(k1(m)) == below

"""Active sets, critical elements and the walk that produces them, plus
verifiers for every checkable identity over ranges of m.

For m >= 3 the walk starts at the leading element p(k1)^2 (the largest one
below m^4), moves along row k1 through its defining elements and sends each
one down to the row whose leading element it precedes.  A move is successful
while that leading element stays below (m+1)^4; the first unsuccessful move
ends the walk and its value is the critical element.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from . import oracle
from .errors import DomainError, EmptySetError, UsageError
from .matrix import _product, pi_leading, row_defining_block, upper_defining
from .primes import DEFAULT_LIMIT, DEFAULT_SEGMENT_SIZE, PrimeCache, count_range, default_cache, p_seq

CLAIMS = (
    "prime_count_identity",
    "k1_maximal",
    "k1_recurrence",
    "active_set_consistency",
    "critical_formula",
    "leading_in_interval",
    "upper_defining_in_active_set",
    "active_set_nonempty",
    "min_prime_gcd",
    "legendre_instance",
)

DEFAULT_BLOCK_SPAN = 1 << 26
WINDOW_MARGIN = 1 << 12


@dataclass(frozen=True)
class ActiveSetRecord:
    m: int
    k1: int
    q: int
    H: tuple[int, ...]
    C: int
    k1_next: int

    def to_dict(self) -> dict:
        return {"m": self.m, "k1": self.k1, "q": self.q, "H": list(self.H),
                "C": self.C, "k1_next": self.k1_next}


class Step(NamedTuple):
    from_row: int
    to_row: int
    value: int
    label: str


@dataclass(frozen=True)
class SchemeTrace:
    """Walk summary; ``steps`` expands it into the individual moves."""

    k1: int
    start_leading: int
    values: tuple[int, ...]  # row-k1 defining values visited, the failing one last
    rows: tuple[int, ...]  # landing row of each downward move
    terminal_leading: int

    @property
    def q(self) -> int:
        return len(self.values) - 1

    @property
    def steps(self) -> list[Step]:
        steps, row = [], self.k1
        for i, (v, j) in enumerate(zip(self.values, self.rows)):
            steps.append(Step(row, self.k1, v, "along-row"))
            steps.append(Step(self.k1, j, v, "down-success" if i < self.q else "down-failure"))
            row = j
        steps.append(Step(row, self.k1 + self.q, self.terminal_leading, "to-leading"))
        return steps

    def violations(self) -> list[str]:
        return _trace_problems(self.k1, np.array(self.rows, dtype=np.int64), self.q,
                               [s.label for s in self.steps])


@dataclass(frozen=True)
class RestrictedDefiningSet:
    m: int
    members: tuple[int, ...]


class GcdQuotient(NamedTuple):
    """min(H) / gcd(H); ``degenerate`` marks a singleton H, where the quotient is 1."""

    value: int
    degenerate: bool


@dataclass(frozen=True)
class Violation:
    m: int
    claim: str
    expected: object
    actual: object

    def to_dict(self) -> dict:
        return {"m": self.m, "claim": self.claim, "expected": self.expected, "actual": self.actual}


@dataclass
class VerificationReport:
    m_from: int
    m_to: int
    claims: dict[str, str]
    degenerate_q1: list[int] = field(default_factory=list)
    first_violation: Violation | None = None
    elapsed_ms: int = 0

    @property
    def ok(self) -> bool:
        return all(status == "pass" for status in self.claims.values())

    def to_dict(self) -> dict:
        return {
            "range": {"from": self.m_from, "to": self.m_to},
            "claims": dict(self.claims),
            "degenerate_q1": list(self.degenerate_q1),
            "first_violation": self.first_violation.to_dict() if self.first_violation else None,
            "elapsed_ms": self.elapsed_ms,
        }


def _require_m(m: int, lowest: int = 3) -> None:
    if m < lowest:
        raise DomainError(f"m must be >= {lowest}, got {m}")


def k1(m: int, cache: PrimeCache | None = None) -> int:
    """Largest row k > 1 whose leading element p(k)^2 is below m^4."""
    _require_m(m)
    cache = cache or default_cache()
    # p(k)^2 < m^4  <=>  p(k) <= m^2 - 1
    return cache.pi(m * m - 1) - 2


def q_count(m: int, cache: PrimeCache | None = None) -> int:
    """Number of primes strictly between m^2 and (m+1)^2."""
    _require_m(m, 1)
    cache = cache or default_cache()
    return cache.pi((m + 1) ** 2 - 1) - cache.pi(m * m)


class _Walk(NamedTuple):
    k1: int
    scale: int
    values: np.ndarray  # successes then the failing value
    rows: np.ndarray
    q: int


def _walk(m: int, cache: PrimeCache) -> _Walk:
    return walk_row(k1(m, cache), m**4, (m + 1) ** 4, cache, int(1.5 * m / math.log(m)) + 16)


def walk_row(row: int, m4: int, m4_next: int, cache: PrimeCache, chunk: int = 64) -> _Walk:
    """Walk row ``row`` from its leading element, testing each downward move
    against the window (m4, m4_next)."""
    scale = p_seq(row, cache)
    after = scale * scale
    values, rows = [], []
    while True:
        vals, _, qs = row_defining_block(row, after, chunk, cache)
        # downward move: the value lands in the row whose scale is its column factor
        j = cache.pi_array(qs) - 2
        pj = p_seq(j, cache)
        land = _product(pj, pj)
        ok = (((vals < m4) & (m4 < land)) | ((m4 < vals) & (vals < land))) & (land < m4_next)
        if ok.all():
            values.append(vals)
            rows.append(j)
            after = int(vals[-1])
            chunk *= 2
            continue
        stop = int(np.argmin(ok))
        values.append(vals[: stop + 1])
        rows.append(j[: stop + 1])
        v = np.concatenate(values)
        return _Walk(row, scale, v, np.concatenate(rows), v.size - 1)


def _record(m: int, w: _Walk) -> ActiveSetRecord:
    vals = w.values.tolist()
    return ActiveSetRecord(m, w.k1, w.q, tuple(vals[: w.q]), vals[w.q], w.k1 + w.q)


def _trace(w: _Walk, cache: PrimeCache) -> SchemeTrace:
    terminal = p_seq(w.k1 + w.q, cache) ** 2
    return SchemeTrace(w.k1, w.scale * w.scale, tuple(w.values.tolist()),
                       tuple(w.rows.tolist()), terminal)


def _trace_problems(k1_row: int, rows: np.ndarray, q: int, labels=None) -> list[str]:
    problems = []
    if not np.array_equal(rows[:q], k1_row + np.arange(1, q + 1)):
        problems.append("successful moves do not land on rows k1+1, ..., k1+q")
    if int(rows[q]) != k1_row + q + 1:
        problems.append("the unsuccessful move does not land on row k1+q+1")
    if labels is not None:
        downs = [lab for lab in labels if lab.startswith("down-")]
        if downs.count("down-failure") != 1 or downs[-1] != "down-failure":
            problems.append("the walk must end with exactly one unsuccessful move")
    return problems


def scheme1(m: int, cache: PrimeCache | None = None) -> tuple[ActiveSetRecord, SchemeTrace]:
    """Run the walk for m^4; returns the active-set certificate and its trace."""
    _require_m(m)
    cache = cache or default_cache()
    w = _walk(m, cache)
    return _record(m, w), _trace(w, cache)


def active_set(m: int, cache: PrimeCache | None = None) -> list[int]:
    _require_m(m)
    return list(_record(m, _walk(m, cache or default_cache())).H)


def critical_element(m: int, cache: PrimeCache | None = None) -> int:
    _require_m(m)
    return _record(m, _walk(m, cache or default_cache())).C


def restricted_defining_set(m: int, cache: PrimeCache | None = None) -> RestrictedDefiningSet:
    """Defining elements a of row k1 with p(k1)^2 < a <= C, found by a fresh row scan."""
    _require_m(m)
    cache = cache or default_cache()
    rec = _record(m, _walk(m, cache))
    scale = p_seq(rec.k1, cache)
    members, after = [], scale * scale
    while True:
        vals, _, _ = row_defining_block(rec.k1, after, 256, cache)
        keep = vals[vals <= rec.C]
        members.extend(keep.tolist())
        if keep.size < vals.size:
            return RestrictedDefiningSet(m, tuple(members))
        after = int(vals[-1])


def min_prime_via_H(m: int, cache: PrimeCache | None = None) -> GcdQuotient:
    """min(H) / gcd(H) for the active set of m^4."""
    h = active_set(m, cache)
    if not h:
        raise EmptySetError(f"the active set for m = {m} is empty")
    return GcdQuotient(h[0] // math.gcd(*h), len(h) == 1)


def leading_in_interval(m: int, cache: PrimeCache | None = None) -> int | None:
    """The least leading element in (m^4, (m+1)^4), or None if there is none."""
    _require_m(m, 2)
    cache = cache or default_cache()
    k = pi_leading(m**4, cache) + 1
    lead = p_seq(k, cache) ** 2
    return lead if m**4 < lead < (m + 1) ** 4 else None


def verify_prime_count_identity(x_max: int, cache: PrimeCache | None = None) -> VerificationReport:
    """pi(x) == pi_leading(x^2) + 2 for every integer x in [3, x_max]."""
    if x_max < 3:
        raise UsageError(f"x_max must be >= 3, got {x_max}")
    cache = cache or default_cache()
    started = time.perf_counter()
    first = None
    for x in range(3, x_max + 1):
        lhs, rhs = cache.pi(x), pi_leading(x * x, cache) + 2
        if lhs != rhs:
            first = Violation(x, "prime_count_identity", lhs, rhs)
            break
    return VerificationReport(3, x_max, {"prime_count_identity": "fail" if first else "pass"},
                              first_violation=first,
                              elapsed_ms=int((time.perf_counter() - started) * 1000))


verify_theorem_2_1 = verify_prime_count_identity


# range verification -------------------------------------------------------


def check_m(m: int, cache: PrimeCache, small: PrimeCache | None = None,
            oracle_limit: int = oracle.ORACLE_MAX_M) -> tuple[dict, bool, ActiveSetRecord]:
    """Evaluate every claim at m.

    Returns ({claim: (expected, actual)} for failures, degenerate flag, record).
    ``cache`` must cover m^2 - gap .. (m+1)^2 + gap; ``small`` serves pi(m).
    """
    small = small or cache
    bad = {}
    w = _walk(m, cache)
    rec = _record(m, w)
    m2, m2_next = m * m, (m + 1) ** 2
    scale = w.scale
    h = w.values[: w.q]

    lhs, rhs = small.pi(m), pi_leading(m2, small) + 2
    if lhs != rhs:
        bad["prime_count_identity"] = (lhs, rhs)

    p_here, p_after = cache.nth_primes([rec.k1 + 2, rec.k1 + 3]).tolist()
    if not (rec.k1 > 1 and p_here**2 < m**4 <= p_after**2):
        bad["k1_maximal"] = ([p_here**2, m**4, p_after**2], rec.k1)

    q = q_count(m, cache)
    k1_next = k1(m + 1, cache)
    if k1_next != rec.k1 + q or rec.k1_next != k1_next:
        bad["k1_recurrence"] = (k1_next, rec.k1 + q)

    problems = _trace_problems(rec.k1, w.rows, w.q)
    # the walk lands on p(k1+q)^2, which must sit in row k1+q at the column of max(H)
    if w.q and p_seq(rec.k1 + w.q, cache) ** 2 != p_seq(rec.k1 + w.q, cache) * (rec.H[-1] // scale):
        problems.append("terminal leading element is not in the column of max(H)")
    closed = _product(scale, cache.primes_between(m2 + 1, m2_next - 1))
    if w.q != q or not np.array_equal(h, closed):
        problems.append("active set differs from scale * primes in (m^2, (m+1)^2)")
    if m <= oracle_limit:
        ok1, oh, oc, onext = oracle.oracle_record(m)
        if (ok1, oh, oc, onext) != (rec.k1, list(rec.H), rec.C, rec.k1_next):
            problems.append("walk differs from the brute-force oracle")
    if problems:
        bad["active_set_consistency"] = (list(closed.tolist()), list(rec.H))

    nxt = cache.next_prime(m2_next - 1)
    if rec.C != scale * nxt:
        bad["critical_formula"] = (scale * nxt, rec.C)

    witness = leading_in_interval(m, cache)
    if witness is None or q < 1:
        bad["leading_in_interval"] = ("leading element in (m^4, (m+1)^4)", witness)

    k1_d, d = upper_defining(scale * scale, cache)
    if not (w.q and k1_d == rec.k1 and d == rec.H[0]):
        bad["upper_defining_in_active_set"] = (d, rec.H[0] if w.q else None)

    if w.q == 0:
        bad["active_set_nonempty"] = (">= 1", 0)

    degenerate = w.q == 1
    least = cache.next_prime(m2)
    if w.q == 0:
        bad["min_prime_gcd"] = (least, None)
    else:
        g = int(np.gcd.reduce(h)) if h.dtype != object else math.gcd(*h.tolist())
        quotient = rec.H[0] // g
        if d % scale or d // scale != least or (w.q >= 2 and (quotient != least or g != scale)):
            bad["min_prime_gcd"] = (least, quotient if w.q >= 2 else d // scale)

    if q < 1:
        bad["legendre_instance"] = (">= 1", q)
    return bad, degenerate, rec


@dataclass
class BlockResult:
    m_lo: int
    m_hi: int
    failures: dict[str, Violation] = field(default_factory=dict)
    degenerate_q1: list[int] = field(default_factory=list)
    records: list[ActiveSetRecord] | None = None

    def merge(self, other: "BlockResult") -> "BlockResult":
        failures = dict(self.failures)
        for claim, v in other.failures.items():
            if claim not in failures or v.m < failures[claim].m:
                failures[claim] = v
        records = None
        if self.records is not None or other.records is not None:
            records = sorted((self.records or []) + (other.records or []), key=lambda r: r.m)
        return BlockResult(min(self.m_lo, other.m_lo), max(self.m_hi, other.m_hi), failures,
                           sorted(self.degenerate_q1 + other.degenerate_q1), records)


def verify_block(m_lo: int, m_hi: int, cache: PrimeCache, small: PrimeCache | None = None,
                 oracle_limit: int = oracle.ORACLE_MAX_M, keep_records: bool = False) -> BlockResult:
    result = BlockResult(m_lo, m_hi, records=[] if keep_records else None)
    for m in range(m_lo, m_hi + 1):
        bad, degenerate, rec = check_m(m, cache, small, oracle_limit)
        for claim, (expected, actual) in bad.items():
            result.failures.setdefault(claim, Violation(m, claim, expected, actual))
        if degenerate:
            result.degenerate_q1.append(m)
        if keep_records:
            result.records.append(rec)
    return result


def plan_blocks(m_lo: int, m_hi: int, block_span: int = DEFAULT_BLOCK_SPAN,
                min_blocks: int = 1) -> list[tuple[int, int]]:
    """Contiguous m-blocks each covering about ``block_span`` integers of (m^2, (m+1)^2]."""
    total = (m_hi + 1) ** 2 - m_lo**2
    span = max(1, min(block_span, total // max(min_blocks, 1)))
    blocks, a = [], m_lo
    while a <= m_hi:
        b = a
        while b < m_hi and (b + 1) ** 2 - a * a < span:
            b += 1
        blocks.append((a, b))
        a = b + 1
    return blocks


def _window_start(m: int) -> int:
    return max(3, m * m - WINDOW_MARGIN)


def _count_task(args) -> int:
    lo, hi, segment_size = args
    return count_range(lo, hi, segment_size=segment_size)


def _verify_task(args) -> BlockResult:
    a, b, start, before, segment_size, limit, oracle_limit, keep = args
    window = PrimeCache(segment_size, limit, start, before)
    small = PrimeCache(min(segment_size, 1 << 16))
    return verify_block(a, b, window, small, oracle_limit, keep)


def _check_range_args(m_lo: int, m_hi: int, jobs: int) -> None:
    if m_lo < 3:
        raise UsageError(f"m ranges start at 3 or above, got {m_lo}")
    if m_lo > m_hi:
        raise UsageError(f"empty range: from={m_lo} > to={m_hi}")
    if jobs < 1:
        raise UsageError(f"jobs must be >= 1, got {jobs}")


def run_blocks(m_lo: int, m_hi: int, jobs: int = 1, *, segment_size: int = DEFAULT_SEGMENT_SIZE,
               oracle_limit: int = oracle.ORACLE_MAX_M, keep_records: bool = False,
               block_span: int = DEFAULT_BLOCK_SPAN, limit: int = DEFAULT_LIMIT,
               cache: PrimeCache | None = None) -> Iterator[BlockResult]:
    """Yield per-block results in ascending m order.

    With jobs == 1 the blocks share one growing cache.  Otherwise each worker
    sieves only its own window; the absolute prime count below each window is
    established first by a parallel counting pass.
    """
    _check_range_args(m_lo, m_hi, jobs)
    blocks = plan_blocks(m_lo, m_hi, block_span, jobs)
    if jobs == 1:
        cache = cache or default_cache()
        for a, b in blocks:
            yield verify_block(a, b, cache, cache, oracle_limit, keep_records)
        return
    starts = [_window_start(a) for a, _ in blocks]
    cuts = sorted(set(range(2, starts[0], block_span)) | set(starts))
    intervals = [(lo, hi - 1, segment_size) for lo, hi in zip(cuts, cuts[1:])]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        counts = list(pool.map(_count_task, intervals))
        below = dict(zip(cuts, [0] + np.cumsum(counts).tolist()))
        tasks = [(a, b, s, below[s], segment_size, limit, oracle_limit, keep_records)
                 for (a, b), s in zip(blocks, starts)]
        yield from pool.map(_verify_task, tasks)


def summarize(result: BlockResult, elapsed_ms: int = 0) -> VerificationReport:
    claims = {c: "fail" if c in result.failures else "pass" for c in CLAIMS}
    first = min(result.failures.values(), key=lambda v: (v.m, CLAIMS.index(v.claim)), default=None)
    return VerificationReport(result.m_lo, result.m_hi, claims, list(result.degenerate_q1),
                              first, elapsed_ms)


def verify_range(m_lo: int, m_hi: int, jobs: int = 1, **kwargs) -> VerificationReport:
    """Check every claim for each m in [m_lo, m_hi] and aggregate a report."""
    started = time.perf_counter()
    merged = None
    for part in run_blocks(m_lo, m_hi, jobs, **kwargs):
        merged = part if merged is None else merged.merge(part)
    return summarize(merged, int((time.perf_counter() - started) * 1000))

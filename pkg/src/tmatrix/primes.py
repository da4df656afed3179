"""Prime engine: segmented odd-only sieve, an append-only prime cache, and
deterministic 64-bit primality.

The cache stores one packed bitset of odd numbers per segment together with a
table of cumulative prime counts, so ``pi`` and ``nth_prime`` are a bisect plus
one search inside a single (cached, unpacked) segment.
"""

from __future__ import annotations

import math
import operator
import threading
from bisect import bisect_right
from collections import OrderedDict
from fractions import Fraction

import numpy as np

from .errors import BudgetError, DomainError, UsageError, WidthError

DEFAULT_SEGMENT_SIZE = 1 << 20  # odd slots per segment
DEFAULT_LIMIT = 1 << 33  # largest value the default cache will sieve to
DEFAULT_MAX_SPAN = 1 << 28  # widest range sieve_range accepts
BASE_PRIME_LIMIT = 1 << 27  # largest sieving prime; beyond hi = 2**54 the sieve turns hybrid
PARTIAL_SIEVE_LIMIT = 1 << 16
U64 = 1 << 64
I64_MAX = (1 << 63) - 1
CACHE_FORMAT_VERSION = 1

# Deterministic for every n < 3.3e24, so in particular for all 64-bit n.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(v: int) -> bool:
    """Exact primality for 0 <= v < 2**64 (Miller-Rabin, fixed witness set)."""
    v = operator.index(v)
    if v < 0:
        raise DomainError(f"is_prime expects a non-negative integer, got {v}")
    if v >= U64:
        raise WidthError(f"{v} does not fit in 64 bits")
    if v < 2:
        return False
    for p in _MR_BASES:
        if v % p == 0:
            return v == p
    d, s = v - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, v)
        if x == 1 or x == v - 1:
            continue
        for _ in range(s - 1):
            x = x * x % v
            if x == v - 1:
                break
        else:
            return False
    return True


def _floor(x) -> int:
    """Exact floor for ints, floats, Fractions and Decimals."""
    if isinstance(x, (int, np.integer)):
        return int(x)
    return math.floor(Fraction(x))


_base_lock = threading.Lock()
_base_primes = np.array([2, 3, 5, 7], dtype=np.int64)
_base_limit = 10


def _small_primes(limit: int) -> np.ndarray:
    """All primes <= limit from a flat sieve, grown geometrically and memoised."""
    global _base_primes, _base_limit
    if limit > BASE_PRIME_LIMIT:
        raise BudgetError(f"sieving primes up to {limit} exceed the base budget {BASE_PRIME_LIMIT}")
    with _base_lock:
        if limit > _base_limit:
            new_limit = min(max(limit, 2 * _base_limit), BASE_PRIME_LIMIT)
            flags = np.ones(new_limit + 1, dtype=bool)
            flags[:2] = False
            flags[4::2] = False
            for p in range(3, math.isqrt(new_limit) + 1, 2):
                if flags[p]:
                    flags[p * p :: 2 * p] = False
            _base_primes = np.flatnonzero(flags).astype(np.int64)
            _base_limit = new_limit
        primes = _base_primes
    return primes[: np.searchsorted(primes, limit, side="right")]


def _odd_mask(lo: int, hi: int) -> np.ndarray:
    """Primality of the odd numbers lo+1, lo+3, ..., hi-1 (lo and hi even).

    Past the base budget the segment is pre-sieved with small primes and the
    survivors are confirmed one by one with is_prime.
    """
    n = (hi - lo) // 2
    mask = np.ones(n, dtype=bool)
    if lo == 0:
        mask[0] = False  # 1 is not prime
    root = math.isqrt(hi - 1)
    partial = root > BASE_PRIME_LIMIT
    ps = _small_primes(PARTIAL_SIEVE_LIMIT if partial else root)[1:]
    if ps.size:
        pu = ps.astype(np.uint64)
        ulo = np.uint64(lo)
        # offsets of the first odd multiple >= max(lo, p*p), relative to lo
        off = ((pu - ulo % pu) % pu).astype(np.int64)
        sq = pu * pu
        above = sq > ulo
        off[above] = (sq[above] - ulo).astype(np.int64)
        off += np.where(off % 2 == 0, ps, 0)
        for p, i in zip(ps.tolist(), ((off - 1) // 2).tolist()):
            if i < n:
                mask[i::p] = False
    if partial:
        for i in np.flatnonzero(mask).tolist():
            mask[i] = is_prime(lo + 1 + 2 * i)
    return mask


def _check_range(lo: int, hi: int, max_span: int) -> None:
    if lo < 2:
        raise UsageError(f"range must start at 2 or above, got lo={lo}")
    if lo > hi:
        raise UsageError(f"empty range: lo={lo} > hi={hi}")
    if hi >= U64:
        raise WidthError(f"hi={hi} does not fit in 64 bits")
    if hi - lo > max_span:
        raise BudgetError(f"range width {hi - lo} exceeds the budget {max_span}")


def _segments(lo: int, hi: int, segment_size: int):
    """Even-aligned [a, b) windows covering the inclusive range [lo, hi]."""
    span = 2 * segment_size
    a = lo - lo % 2
    end = hi + 1 + (hi + 1) % 2
    while a < end:
        b = min(a + span, end)
        yield a, b
        a = b


def sieve_range(lo: int, hi: int, *, segment_size: int = DEFAULT_SEGMENT_SIZE,
                max_span: int = DEFAULT_MAX_SPAN) -> np.ndarray:
    """Ascending array of the primes in [lo, hi]."""
    lo, hi = operator.index(lo), operator.index(hi)
    _check_range(lo, hi, max_span)
    dtype = np.int64 if hi <= I64_MAX else np.uint64
    parts = [np.array([2], dtype=dtype)] if lo <= 2 <= hi else []
    for a, b in _segments(lo, hi, segment_size):
        idx = np.flatnonzero(_odd_mask(a, b)).astype(dtype)
        vals = dtype(a + 1) + dtype(2) * idx
        parts.append(vals[(vals >= dtype(lo)) & (vals <= dtype(hi))])
    return np.concatenate(parts) if parts else np.empty(0, dtype=dtype)


def count_range(lo: int, hi: int, *, segment_size: int = DEFAULT_SEGMENT_SIZE) -> int:
    """Number of primes in [lo, hi]; no width budget, memory is one segment."""
    lo, hi = operator.index(lo), operator.index(hi)
    lo = max(lo, 2)
    if lo > hi:
        return 0
    _check_range(lo, hi, U64)
    total = 1 if lo <= 2 <= hi else 0
    for a, b in _segments(lo, hi, segment_size):
        mask = _odd_mask(a, b)
        # trim odd slots outside [lo, hi]
        first = max(0, (lo - a) // 2)
        last = min(mask.size, (hi - a + 1) // 2)
        total += int(np.count_nonzero(mask[first:last]))
    return total


class PrimeCache:
    """Append-only segmented prime table covering [start, watermark].

    ``count_before`` must equal pi(start - 1); a cache with ``start > 2`` is a
    window over a high range whose indices are still absolute.
    Extension is serialised by a lock; queries below the watermark only read.
    """

    def __init__(self, segment_size: int = DEFAULT_SEGMENT_SIZE, limit: int = DEFAULT_LIMIT,
                 start: int = 0, count_before: int = 0):
        if segment_size < 64 or segment_size % 8:
            raise UsageError("segment_size must be a multiple of 8 and at least 64")
        self.segment_size = segment_size
        self.span = 2 * segment_size
        self.limit = limit
        if start <= 2:
            start, count_before = 0, 0
        self.start = start
        self._base = start - start % 2
        self._bits: list[np.ndarray] = []
        self._cum = [count_before]
        self._cum_arr = np.array(self._cum, dtype=np.int64)
        self._lock = threading.Lock()
        self._lru: OrderedDict[int, np.ndarray] = OrderedDict()
        self._lru_lock = threading.Lock()
        self._head: list[int] = []

    def __repr__(self):
        return (f"PrimeCache(start={self.start}, watermark={self.watermark}, "
                f"segments={len(self._bits)}, primes={self._cum[-1]})")

    @property
    def watermark(self) -> int:
        return self._base + len(self._bits) * self.span - 1

    @property
    def count_before(self) -> int:
        return self._cum[0]

    @property
    def count(self) -> int:
        """pi(watermark)."""
        return self._cum[-1]

    # extension -----------------------------------------------------------

    def extend_to(self, x: int) -> None:
        if x <= self.watermark:
            return
        if x > self.limit:
            raise BudgetError(f"{x} is above the sieve budget {self.limit}")
        with self._lock:
            while self.watermark < x:
                lo = self.watermark + 1
                mask = _odd_mask(lo, lo + self.span)
                extra = 1 if lo == 0 else 0  # the prime 2
                self._bits.append(np.packbits(mask))
                self._cum.append(self._cum[-1] + extra + int(np.count_nonzero(mask)))
            self._cum_arr = np.array(self._cum, dtype=np.int64)
            if self._base == 0 and not self._head:
                self._head = self._segment(0).tolist()

    def _extend_segment(self) -> None:
        self.extend_to(self.watermark + 1)

    def _segment(self, i: int) -> np.ndarray:
        with self._lru_lock:
            arr = self._lru.get(i)
            if arr is not None:
                self._lru.move_to_end(i)
                return arr
        lo = self._base + i * self.span
        mask = np.unpackbits(self._bits[i])[: self.segment_size].view(bool)
        arr = lo + 1 + 2 * np.flatnonzero(mask).astype(np.int64)
        if lo == 0:
            arr = np.concatenate([np.array([2], dtype=np.int64), arr])
        arr.setflags(write=False)
        with self._lru_lock:
            self._lru[i] = arr
            if len(self._lru) > 16:
                self._lru.popitem(last=False)
        return arr

    def _seg_of(self, x: int) -> int:
        return (x - self._base) // self.span

    # queries ---------------------------------------------------------------

    def pi(self, x) -> int:
        """Number of primes <= x (x may be any real)."""
        xi = _floor(x)
        if xi < self.start:
            if self.start == 0 or xi < 2:
                return 0
            if xi == self.start - 1:
                return self.count_before
            raise BudgetError(f"{xi} lies below this cache's window start {self.start}")
        if self._head and xi <= self._head[-1]:
            return bisect_right(self._head, xi)
        self.extend_to(xi)
        i = self._seg_of(xi)
        return self._cum[i] + int(np.searchsorted(self._segment(i), xi, side="right"))

    def pi_array(self, xs: np.ndarray) -> np.ndarray:
        """Vectorised pi over an ascending int64 array inside the window."""
        xs = np.asarray(xs, dtype=np.int64)
        if xs.size == 0:
            return np.empty(0, dtype=np.int64)
        if int(xs[0]) < self.start:
            raise BudgetError(f"{int(xs[0])} lies below this cache's window start {self.start}")
        self.extend_to(int(xs[-1]))
        segs = (xs - self._base) // self.span
        out = np.empty(xs.size, dtype=np.int64)
        for s in np.unique(segs).tolist():
            sel = segs == s
            out[sel] = self._cum[s] + np.searchsorted(self._segment(s), xs[sel], side="right")
        return out

    def nth_prime(self, i: int) -> int:
        """The i-th prime, p_1 = 2."""
        i = operator.index(i)
        if i < 1:
            raise DomainError(f"prime indices start at 1, got {i}")
        if i <= len(self._head):
            return self._head[i - 1]
        if i <= self.count_before:
            raise BudgetError(f"prime #{i} lies below this cache's window start {self.start}")
        while self._cum[-1] < i:
            self._extend_segment()
        s = bisect_right(self._cum, i - 1) - 1
        return int(self._segment(s)[i - 1 - self._cum[s]])

    def nth_primes(self, idx) -> np.ndarray:
        """Vectorised nth_prime over an int array of indices."""
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            return np.empty(idx.shape, dtype=np.int64)
        if int(idx.min()) < 1:
            raise DomainError("prime indices start at 1")
        if int(idx.min()) <= self.count_before:
            raise BudgetError(f"prime #{int(idx.min())} lies below this cache's window start {self.start}")
        top = int(idx.max())
        while self._cum[-1] < top:
            self._extend_segment()
        segs = np.searchsorted(self._cum_arr, idx - 1, side="right") - 1
        out = np.empty(idx.shape, dtype=np.int64)
        for s in np.unique(segs).tolist():
            sel = segs == s
            out[sel] = self._segment(s)[idx[sel] - 1 - self._cum[s]]
        return out

    def prime_index(self, p: int) -> int:
        """i with nth_prime(i) == p."""
        if not is_prime(p):
            raise DomainError(f"{p} is not prime")
        return self.pi(p)

    def next_primes(self, after: int, count: int) -> np.ndarray:
        """The ``count`` smallest primes strictly greater than ``after``."""
        after = max(_floor(after), self.start - 1)
        parts, need = [], count
        x = after + 1
        while need > 0:
            self.extend_to(x)
            s = self._seg_of(x)
            arr = self._segment(s)
            got = arr[np.searchsorted(arr, after, side="right"):][:need]
            parts.append(got)
            need -= got.size
            x = self._base + (s + 1) * self.span
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    def next_prime(self, v) -> int:
        """Least prime > v."""
        return int(self.next_primes(v, 1)[0])

    def prev_prime(self, v) -> int:
        """Greatest prime < v."""
        x = int(v) - 1 if isinstance(v, (int, np.integer)) else math.ceil(Fraction(v)) - 1
        if x < 2:
            raise DomainError(f"there is no prime below {v}")
        if x < self.start:
            raise BudgetError(f"{x} lies below this cache's window start {self.start}")
        self.extend_to(x)
        s = self._seg_of(x)
        while s >= 0:
            arr = self._segment(s)
            pos = int(np.searchsorted(arr, x, side="right"))
            if pos:
                return int(arr[pos - 1])
            s -= 1
        raise BudgetError(f"no prime between the window start {self.start} and {v}")

    def primes_between(self, lo: int, hi: int) -> np.ndarray:
        """Ascending primes in the inclusive range [lo, hi]."""
        lo, hi = max(int(lo), self.start), int(hi)
        if lo > hi:
            return np.empty(0, dtype=np.int64)
        self.extend_to(hi)
        parts = []
        for s in range(self._seg_of(lo), self._seg_of(hi) + 1):
            arr = self._segment(s)
            parts.append(arr[np.searchsorted(arr, lo): np.searchsorted(arr, hi, side="right")])
        return np.concatenate(parts)

    # persistence -----------------------------------------------------------

    def save(self, path) -> None:
        with self._lock:
            bits = np.stack(self._bits) if self._bits else np.empty((0, self.segment_size // 8), np.uint8)
            np.savez(path, version=CACHE_FORMAT_VERSION, segment_size=self.segment_size,
                     start=self.start, cum=np.array(self._cum, dtype=np.int64), bits=bits)

    @classmethod
    def load(cls, path, limit: int = DEFAULT_LIMIT) -> "PrimeCache":
        with np.load(path) as data:
            if int(data["version"]) != CACHE_FORMAT_VERSION:
                raise UsageError(f"unsupported prime cache version {int(data['version'])}")
            cum = data["cum"].tolist()
            cache = cls(int(data["segment_size"]), limit, int(data["start"]), cum[0])
            cache._bits = list(data["bits"])
        cache._cum = cum
        cache._cum_arr = np.array(cum, dtype=np.int64)
        if cache._base == 0 and cache._bits:
            cache._head = cache._segment(0).tolist()
        return cache


_default_cache: PrimeCache | None = None
_default_lock = threading.Lock()


def default_cache() -> PrimeCache:
    """The process-wide cache used when no explicit cache is passed."""
    global _default_cache
    if _default_cache is None:
        with _default_lock:
            if _default_cache is None:
                _default_cache = PrimeCache()
    return _default_cache


def set_default_cache(cache: PrimeCache) -> None:
    global _default_cache
    _default_cache = cache


def configure(segment_size: int = DEFAULT_SEGMENT_SIZE, limit: int = DEFAULT_LIMIT) -> PrimeCache:
    """Replace the default cache with a fresh one using these settings."""
    cache = PrimeCache(segment_size, limit)
    set_default_cache(cache)
    return cache


def pi(x, cache: PrimeCache | None = None) -> int:
    return (cache or default_cache()).pi(x)


def nth_prime(i: int, cache: PrimeCache | None = None) -> int:
    return (cache or default_cache()).nth_prime(i)


def p_seq(k, cache: PrimeCache | None = None):
    """Shifted prime sequence p(k) = p_{k+2}: 5, 7, 11, 13, ...

    Accepts an int or an integer array (returned elementwise).
    """
    cache = cache or default_cache()
    if np.ndim(k):
        k = np.asarray(k, dtype=np.int64)
        if k.size and int(k.min()) < 1:
            raise DomainError("row indices start at 1")
        return cache.nth_primes(k + 2)
    k = operator.index(k)
    if k < 1:
        raise DomainError(f"row indices start at 1, got {k}")
    return cache.nth_prime(k + 2)


def prime_index(p: int, cache: PrimeCache | None = None) -> int:
    return (cache or default_cache()).prime_index(p)

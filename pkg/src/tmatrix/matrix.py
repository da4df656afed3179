"""The virtual T-matrix a(k; n) = p(k) * f(n).

Nothing is stored: every value is computed from its (row, column) pair.  Rows
are scaled by the shifted primes p(k) = p_{k+2}; columns run through the
numbers 6h +- 1 starting at 5.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, NamedTuple

import numpy as np

from .errors import BudgetError, DomainError, NotInRowError, WidthError
from .primes import I64_MAX, PrimeCache, default_cache, is_prime, p_seq

VALUE_BITS = 128
VALUE_LIMIT = 1 << VALUE_BITS


class MatrixIndex(NamedTuple):
    k: int
    n: int


class Classification(NamedTuple):
    defining: bool
    leading: bool

    def __str__(self):
        kind = "defining" if self.defining else "not defining"
        return f"{kind}, leading" if self.leading else kind


@dataclass(frozen=True)
class ElementRecord:
    index: MatrixIndex
    value: int
    is_defining: bool
    is_leading: bool

    @property
    def k(self) -> int:
        return self.index.k

    @property
    def n(self) -> int:
        return self.index.n


def _check_index(name, v):
    if np.ndim(v):
        v = np.asarray(v, dtype=np.int64)
        if v.size and int(v.min()) < 1:
            raise DomainError(f"{name} indices start at 1")
        return v
    v = operator.index(v)
    if v < 1:
        raise DomainError(f"{name} indices start at 1, got {v}")
    return v


def _guard(value):
    top = int(np.max(value)) if np.ndim(value) else value
    if top >= VALUE_LIMIT:
        raise WidthError(f"matrix value {top} exceeds {VALUE_BITS} bits")
    return value


def _product(a, b):
    """a * b for ints or int64 arrays, falling back to Python ints past int64."""
    if not (np.ndim(a) or np.ndim(b)):
        return _guard(a * b)
    a, b = np.broadcast_arrays(np.asarray(a), np.asarray(b))
    if a.size and int(np.max(a)) * int(np.max(b)) > I64_MAX:
        return _guard(a.astype(object) * b.astype(object))
    return a.astype(np.int64) * b.astype(np.int64)


def f(n):
    """n-th number of the form 6h +- 1, starting at f(1) = 5."""
    n = _check_index("column", n)
    return 3 * n + (3 - (-1) ** (n % 2)) // 2


def f_inverse(v: int) -> int | None:
    """Column n with f(n) == v, or None when v is not of the form 6h +- 1."""
    v = operator.index(v)
    if v < 5 or v % 6 not in (1, 5):
        return None
    return v // 3


def element(k, n, cache: PrimeCache | None = None):
    """a(k; n) = p(k) * f(n); broadcasts over integer arrays."""
    k, n = _check_index("row", k), _check_index("column", n)
    return _product(p_seq(k, cache), f(n))


def element_floor_form(k, n, cache: PrimeCache | None = None):
    """a(k; n) from the floor-based column factor 5 + 2*floor(n/2) + 4*floor((n-1)/2)."""
    k, n = _check_index("row", k), _check_index("column", n)
    return _product(p_seq(k, cache), 5 + 2 * (n // 2) + 4 * ((n - 1) // 2))


def _classify_value(p: int, fn: int) -> Classification:
    # p is prime, so p * fn is a product of two primes iff fn is prime
    return Classification(defining=p != 5 and fn != 5 and is_prime(fn), leading=fn == p)


def classify(k: int, n: int, cache: PrimeCache | None = None) -> Classification:
    k, n = _check_index("row", k), _check_index("column", n)
    p = p_seq(k, cache)
    fn = f(n)
    _guard(p * fn)
    return _classify_value(p, fn)


def record(k: int, n: int, cache: PrimeCache | None = None) -> ElementRecord:
    k, n = _check_index("row", k), _check_index("column", n)
    p = p_seq(k, cache)
    fn = f(n)
    c = _classify_value(p, fn)
    return ElementRecord(MatrixIndex(k, n), _guard(p * fn), c.defining, c.leading)


def column_of(k: int, a: int, cache: PrimeCache | None = None) -> int:
    """#_k(a): the column holding ``a`` in row k."""
    p = p_seq(k, cache)
    a = operator.index(a)
    if a <= 0 or a % p:
        raise NotInRowError(f"{a} is not a multiple of p({k}) = {p}")
    n = f_inverse(a // p)
    if n is None:
        raise NotInRowError(f"{a} / {p} = {a // p} is not of the form 6h +- 1")
    return n


def row_defining_block(k: int, after, count: int, cache: PrimeCache | None = None):
    """The next ``count`` defining values of row k that exceed ``after``.

    Returns (values, columns, factors) where factors are the prime column
    values f(n).  Walks prime columns directly instead of factoring.
    """
    cache = cache or default_cache()
    p = p_seq(k, cache)
    if p == 5:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, empty
    # a prime q > 5 gives a defining value p*q > after iff q > floor(after / p)
    floor_q = math.floor(Fraction(after) / p) if not isinstance(after, int) else after // p
    qs = cache.next_primes(max(floor_q, 5), count)
    return _product(p, qs), qs // 3, qs


def row_defining_iter(k: int, from_value=0, cache: PrimeCache | None = None,
                      chunk: int = 64) -> Iterator[ElementRecord]:
    """Defining elements of row k above ``from_value``, ascending and unbounded."""
    k = _check_index("row", k)
    cache = cache or default_cache()
    p = p_seq(k, cache)
    if p == 5:
        return
    after = from_value
    while True:
        values, cols, qs = row_defining_block(k, after, chunk, cache)
        for v, n, q in zip(values.tolist(), cols.tolist(), qs.tolist()):
            yield ElementRecord(MatrixIndex(k, n), v, True, q == p)
        after = int(values[-1])
        chunk = min(2 * chunk, 1 << 16)


def _leading_row_at_most(b, cache: PrimeCache) -> int:
    """Largest k > 1 with p(k)^2 <= b (b >= 49)."""
    r = math.isqrt(math.floor(Fraction(b)))
    return cache.pi(r) - 2


def upper_defining(b, cache: PrimeCache | None = None) -> tuple[int, int]:
    """D(b) for b >= 49: returns (k1, value)."""
    if Fraction(b) < 49:
        raise DomainError(f"upper defining elements need b >= 49, got {float(b):g}")
    cache = cache or default_cache()
    k1 = _leading_row_at_most(b, cache)
    values, _, _ = row_defining_block(k1, b, 1, cache)
    return k1, int(values[0])


def transition_down(k: int, n: int, cache: PrimeCache | None = None) -> int:
    """Row j reached by moving the defining element a(k; n) > p(k)^2 downwards.

    j is the row whose scale p(j) equals f(n), so a(j; #_k(p(k)^2)) = a(k; n)
    and a(j; n) = p(j)^2.
    """
    cache = cache or default_cache()
    c = classify(k, n, cache)
    if not c.defining:
        raise DomainError(f"a({k};{n}) is not a defining element")
    p = p_seq(k, cache)
    fn = f(n)
    if fn <= p:
        raise DomainError(f"a({k};{n}) = {p * fn} does not exceed p({k})^2 = {p * p}")
    return cache.prime_index(fn) - 2


def pi_leading(x, cache: PrimeCache | None = None) -> int:
    """Number of leading elements p(k)^2 that are <= x."""
    cache = cache or default_cache()
    xi = math.floor(Fraction(x)) if not isinstance(x, int) else x
    if xi < 25:
        return 0
    r = math.isqrt(xi)
    if r > cache.limit:
        raise BudgetError(f"isqrt({xi}) = {r} is above the sieve budget")
    return max(cache.pi(r) - 2, 0)

"""Brute-force reference constructions.

Deliberately independent of the fast path: a flat bytearray sieve, trial
division, and a literal reading of the matrix definitions.  Nothing here
imports from ``primes`` or ``matrix``.  Budgets are small on purpose.
"""

from __future__ import annotations

import math
import threading
from fractions import Fraction

from .errors import BudgetError, DomainError

ORACLE_MAX_M = 5000
ORACLE_MAX_VALUE = 10**10

_lock = threading.Lock()
_sieve = bytearray(b"\x00\x00\x01\x01")  # flags for 0..3
_pi_at_square = [0, 0]  # _pi_at_square[m] = number of primes <= m*m


def _flags(limit: int) -> bytearray:
    """Flat sieve flags for 0..limit (grown geometrically, never segmented)."""
    global _sieve
    with _lock:
        if len(_sieve) <= limit:
            size = max(limit + 1, 2 * len(_sieve))
            flags = bytearray([1]) * size
            flags[0] = flags[1] = 0
            for p in range(2, math.isqrt(size - 1) + 1):
                if flags[p]:
                    flags[p * p :: p] = bytes(len(range(p * p, size, p)))
            _sieve = flags
        return _sieve


def _pi_square(m: int) -> int:
    """Number of primes <= m^2, from running counts over the flat sieve."""
    flags = _flags((m + 1) ** 2)
    with _lock:
        while len(_pi_at_square) <= m:
            j = len(_pi_at_square)
            _pi_at_square.append(_pi_at_square[-1] + flags.count(1, (j - 1) ** 2 + 1, j * j + 1))
        return _pi_at_square[m]


def _check_m(m: int, lowest: int) -> None:
    if m < lowest:
        raise DomainError(f"m must be >= {lowest}, got {m}")
    if m > ORACLE_MAX_M:
        raise BudgetError(f"oracle budget is m <= {ORACLE_MAX_M}, got {m}")


def trial_is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


def factor_count(n: int, cap: int = 3) -> int:
    """Prime factors of n with multiplicity, by trial division; stops at ``cap``."""
    count, d = 0, 2
    while d * d <= n and count < cap:
        while n % d == 0 and count < cap:
            n //= d
            count += 1
        d += 1 if d == 2 else 2
    if n > 1 and count < cap:
        count += 1
    return count


def literal_f(n: int) -> int:
    """3n + (3 - (-1)^n) / 2, evaluated as written."""
    return 3 * n + (3 - (-1) ** n) // 2


def literal_defining(v: int, known_factor: int | None = None) -> bool:
    """Not divisible by 5 and a product of exactly two primes.

    ``known_factor`` is a prime divisor of v (a row scale); dividing it out
    first keeps trial division short for large values.
    """
    if v % 5 == 0:
        return False
    if known_factor is not None:
        if v % known_factor:
            return False
        rest = v // known_factor
        if rest < len(_sieve):
            return _sieve[rest] == 1
        return factor_count(rest, cap=2) == 1
    return factor_count(v) == 2


def oracle_primes_between(m: int) -> list[int]:
    """Primes strictly between m^2 and (m+1)^2."""
    _check_m(m, 1)
    flags = _flags((m + 1) ** 2)
    return [v for v in range(m * m + 1, (m + 1) ** 2) if flags[v]]


def _largest_prime_below(v: int) -> int:
    v -= 1
    while not trial_is_prime(v):
        v -= 1
    return v


def _next_prime_after(v: int) -> int:
    flags = _flags(2 * v + 2)  # Bertrand: a prime lies in (v, 2v)
    v += 1
    while not flags[v]:
        v += 1
    return v


def oracle_active_set(m: int) -> list[int]:
    """H for m^4, built from the ordering conditions rather than by walking rows."""
    _check_m(m, 3)
    scale = _largest_prime_below(m * m)
    m4, m4_next = m**4, (m + 1) ** 4
    members = []
    land = scale
    for p in oracle_primes_between(m):
        # row j_i = k1 + i is scaled by the i-th prime after the row-k1 scale
        land = _next_prime_after(land)
        a, lead = scale * p, land * land
        if not literal_defining(a, scale):
            continue
        if (a < m4 < lead < m4_next) or (m4 < a < lead < m4_next):
            members.append(a)
    return members


def oracle_record(m: int) -> tuple[int, list[int], int, int]:
    """(k1, H, C, k1_next) for m^4, each derived by brute force."""
    _check_m(m, 3)
    h = oracle_active_set(m)
    scale = _largest_prime_below(m * m)
    # the critical element: first literal-defining value in the scale's row past H
    floor = h[-1] if h else scale * scale
    n = max(1, floor // scale // 3 - 2)
    while literal_f(n) * scale <= floor or not literal_defining(literal_f(n) * scale, scale):
        n += 1
    # m^2 is never prime, so pi(largest prime below m^2) = pi(m^2)
    return _pi_square(m) - 2, h, literal_f(n) * scale, _pi_square(m + 1) - 2


def oracle_upper_defining(b) -> int:
    """D(b): scan the columns of the leading row below b for the first defining value > b."""
    if Fraction(b) < 49:
        raise DomainError(f"upper defining elements need b >= 49, got {b}")
    if Fraction(b) > ORACLE_MAX_VALUE:
        raise BudgetError(f"oracle budget is b <= {ORACLE_MAX_VALUE}")
    r = math.isqrt(math.floor(Fraction(b)))
    while not trial_is_prime(r):
        r -= 1
    n = 1
    while True:
        v = r * literal_f(n)
        if v > b and literal_defining(v):
            return v
        n += 1

"""Fundamental discriminants and their quadratic characters."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import isqrt
from typing import Iterator

import numpy as np

MAX_ABS_DISC = 2**63 - 1
# cube root of 2^63: after removing every prime up to here the cofactor has at
# most two prime factors, so it is square-divisible only if it is a square.
_TRIAL_LIMIT = 2_097_152
PREFILTER_PRIMES = 200


@dataclass(frozen=True, order=True)
class FundamentalDiscriminant:
    """A fundamental discriminant ``disc`` with modulus |disc| and parity a."""

    modulus: int
    disc: int
    parity: int

    @classmethod
    def from_disc(cls, disc: int) -> "FundamentalDiscriminant":
        if not is_fundamental(disc):
            raise ValueError(f"{disc} is not a fundamental discriminant")
        return cls(modulus=abs(disc), disc=disc, parity=1 if disc < 0 else 0)

    def __str__(self) -> str:
        return str(self.disc)


@dataclass(frozen=True)
class DiscriminantRange:
    """Moduli d with x_min <= d < x_min + span (half-open)."""

    x_min: int
    span: int
    sign: int = -1

    def __post_init__(self):
        if self.x_min < 1 or self.span < 1 or self.sign not in (-1, 1):
            raise ValueError("invalid discriminant range")

    @property
    def x_max(self) -> int:
        return self.x_min + self.span


@lru_cache(maxsize=8)
def primes_up_to(limit: int) -> np.ndarray:
    """All primes <= limit (numpy sieve of Eratosthenes)."""
    if limit < 2:
        return np.zeros(0, dtype=np.int64)
    sieve = np.ones(limit + 1, dtype=bool)
    sieve[:2] = False
    for p in range(2, isqrt(limit) + 1):
        if sieve[p]:
            sieve[p * p::p] = False
    return np.flatnonzero(sieve).astype(np.int64)


@lru_cache(maxsize=4)
def smallest_prime_factors(limit: int) -> np.ndarray:
    spf = np.zeros(limit + 1, dtype=np.int64)
    for p in primes_up_to(isqrt(limit)).tolist():
        block = spf[p * p::p]
        block[block == 0] = p
    idx = np.flatnonzero(spf == 0)
    spf[idx] = idx
    return spf


def _congruence_ok(disc: int) -> bool:
    r = disc % 16
    if disc % 4 == 1:
        return True
    return r in (8, 12)  # disc = 4m with m = 2 or 3 (mod 4)


def _core(disc: int) -> int:
    """|disc| for odd discriminants, |disc|/4 for even ones."""
    n = abs(disc)
    return n if n % 2 else n // 4


@lru_cache(maxsize=1)
def _trial_primes() -> tuple[int, ...]:
    return tuple(primes_up_to(_TRIAL_LIMIT).tolist())


def _squarefree(n: int) -> bool:
    if n % 4 == 0:
        return False
    for p in _trial_primes():
        if p * p > n:
            return True
        if n % p == 0:
            n //= p
            if n % p == 0:
                return False
    r = isqrt(n)
    return r * r != n


def is_fundamental(disc: int) -> bool:
    """Exact fundamental-discriminant test for 0 < |disc| <= 2^63 - 1."""
    if disc == 0:
        raise ValueError("0 is not a discriminant")
    if abs(disc) > MAX_ABS_DISC:
        raise OverflowError("discriminant exceeds the supported 63-bit width")
    if disc == 1 or not _congruence_ok(disc):
        return False
    return _squarefree(_core(disc))


def prefilter(disc: int) -> bool:
    """Cheap screen: congruence classes plus squares of the first 200 primes.

    May accept non-fundamental discriminants, never rejects a fundamental one.
    """
    if disc == 1 or not _congruence_ok(disc):
        return False
    core = _core(disc)
    for p in _first_primes(PREFILTER_PRIMES):
        if core % (p * p) == 0:
            return False
    return True


@lru_cache(maxsize=1)
def _first_primes(count: int) -> tuple[int, ...]:
    return tuple(primes_up_to(2000)[:count].tolist())


def _window_mask(lo: int, hi: int, sign: int) -> np.ndarray:
    """Boolean mask over moduli lo..hi-1 marking fundamental discriminants."""
    d = np.arange(lo, hi, dtype=np.int64)
    disc = sign * d
    mod4 = disc % 4
    mod16 = disc % 16
    odd_ok = mod4 == 1
    even_ok = (mod16 == 8) | (mod16 == 12)
    mask = odd_ok | even_ok
    mask &= d > 1
    # for admissible classes, p^2 | d with p odd is exactly p^2 | core
    for p in primes_up_to(isqrt(hi) + 1).tolist():
        if p == 2:
            continue
        p2 = p * p
        if p2 >= hi:
            break
        start = (-lo) % p2
        mask[start::p2] = False
    return mask


def enumerate_range(rng: DiscriminantRange, use_prefilter: bool = True) -> Iterator[FundamentalDiscriminant]:
    """Fundamental discriminants with the requested sign, ascending by modulus."""
    parity = 1 if rng.sign < 0 else 0
    block = 1 << 20
    for lo in range(rng.x_min, rng.x_max, block):
        hi = min(lo + block, rng.x_max)
        mask = _window_mask(lo, hi, rng.sign)
        for d in (lo + np.flatnonzero(mask)).tolist():
            disc = rng.sign * d
            if use_prefilter and not prefilter(disc):
                raise AssertionError(f"prefilter rejected fundamental discriminant {disc}")
            yield FundamentalDiscriminant(modulus=d, disc=disc, parity=parity)


def count_range(rng: DiscriminantRange) -> int:
    block = 1 << 22
    return sum(int(_window_mask(lo, min(lo + block, rng.x_max), rng.sign).sum())
               for lo in range(rng.x_min, rng.x_max, block))


def kronecker(a: int, n: int) -> int:
    """Kronecker symbol (a / n) for n >= 1."""
    if n < 1:
        raise ValueError("n must be positive")
    if n == 1:
        return 1
    if a % 2 == 0 and n % 2 == 0:
        return 0
    v = (n & -n).bit_length() - 1
    n >>= v
    result = 1
    if v % 2 and a % 8 in (3, 5):
        result = -result
    a %= n
    while a:
        while a % 2 == 0:
            a //= 2
            if n % 8 in (3, 5):
                result = -result
        a, n = n, a
        if a % 4 == 3 and n % 4 == 3:
            result = -result
        a %= n
    return result if n == 1 else 0


def chi(fd: FundamentalDiscriminant, n: int) -> int:
    """chi_d(n): the Kronecker symbol (disc / n)."""
    return kronecker(fd.disc, n)


def character_table(fd: FundamentalDiscriminant, limit: int) -> np.ndarray:
    """chi_d(n) for n = 0..limit as int8 (entry 0 is unused and set to 0).

    Evaluates the Kronecker symbol at primes and extends by complete
    multiplicativity through a smallest-prime-factor sieve.
    """
    spf = smallest_prime_factors(max(limit, 2))
    out = np.zeros(limit + 1, dtype=np.int64)
    if limit >= 1:
        out[1] = 1
    ps = primes_up_to(limit)
    out[ps] = [kronecker(fd.disc, p) for p in ps.tolist()]
    lo = 2
    while lo <= limit:
        hi = min(2 * lo, limit + 1)
        n = np.arange(lo, hi)
        p = spf[lo:hi]
        composite = p != n
        nc = n[composite]
        pc = p[composite]
        out[nc] = out[pc] * out[nc // pc]
        lo = hi
    return out.astype(np.int8)

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st
from sympy.functions.combinatorial.numbers import jacobi_symbol, legendre_symbol
from sympy.ntheory import factorint

from quadzeros import discriminants as dc


def fundamental_oracle(D: int) -> bool:
    if D in (0, 1):
        return False
    if D % 4 == 1:
        return all(e == 1 for e in factorint(abs(D)).values())
    if D % 4 == 0:
        m = D // 4
        return m % 4 in (2, 3) and all(e == 1 for e in factorint(abs(m)).values())
    return False


def kronecker_oracle(a: int, n: int) -> int:
    # multiplicative in n, with (a/2) defined through a mod 8
    out = 1
    for p, e in factorint(n).items():
        if p == 2:
            v = 0 if a % 2 == 0 else (1 if a % 8 in (1, 7) else -1)
        else:
            v = legendre_symbol(a % p, p) if a % p else 0
        out *= v ** e
    return out


def test_small_discriminants_match_oracle():
    for D in range(-3000, 3001):
        if D == 0:
            continue
        assert dc.is_fundamental(D) == fundamental_oracle(D), D


def test_known_values():
    neg = [d for d in range(-60, 0) if dc.is_fundamental(d)]
    assert neg == [-59, -56, -55, -52, -51, -47, -43, -40, -39, -35, -31, -24, -23, -20, -19, -15, -11, -8, -7, -4, -3]
    pos = [d for d in range(1, 41) if dc.is_fundamental(d)]
    assert pos == [5, 8, 12, 13, 17, 21, 24, 28, 29, 33, 37, 40]


@pytest.mark.parametrize("D", [-115147, -175990483, -1000008582815])
def test_reference_discriminants_are_fundamental(D):
    assert dc.is_fundamental(D) and fundamental_oracle(D)


def test_square_of_large_prime_detected():
    p = int(sympy.nextprime(3_000_000))
    D = -(p * p * 7) if (-(p * p * 7)) % 4 == 1 else -(p * p * 3)
    assert D % 4 == 1
    assert not dc.is_fundamental(D)


def test_width_limits():
    with pytest.raises(ValueError):
        dc.is_fundamental(0)
    with pytest.raises(OverflowError):
        dc.is_fundamental(-(2**63))


@settings(max_examples=200, deadline=None)
@given(st.integers(-10**13, 10**13).filter(lambda v: v not in (0, 1)))
def test_is_fundamental_property(D):
    assert dc.is_fundamental(D) == fundamental_oracle(D)


@settings(max_examples=200, deadline=None)
@given(st.integers(-10**13, 10**13).filter(lambda v: v not in (0, 1)))
def test_prefilter_never_rejects(D):
    if dc.is_fundamental(D):
        assert dc.prefilter(D)


@pytest.mark.parametrize("sign", [-1, 1])
def test_enumeration_window(sign):
    rng = dc.DiscriminantRange(10**6, 5000, sign)
    got = [fd.disc for fd in dc.enumerate_range(rng)]
    want = [sign * d for d in range(10**6, 10**6 + 5000) if fundamental_oracle(sign * d)]
    assert got == want
    assert dc.count_range(rng) == len(want)
    assert all(fd.parity == (1 if sign < 0 else 0) for fd in dc.enumerate_range(rng))


def test_enumeration_is_half_open():
    rng = dc.DiscriminantRange(3, 1, -1)
    assert [fd.disc for fd in dc.enumerate_range(rng)] == [-3]
    rng = dc.DiscriminantRange(4, 4, -1)
    assert [fd.disc for fd in dc.enumerate_range(rng)] == [-4, -7]


def test_invalid_range():
    with pytest.raises(ValueError):
        dc.DiscriminantRange(0, 10)
    with pytest.raises(ValueError):
        dc.DiscriminantRange(10, 10, sign=2)


def test_from_disc_rejects_non_fundamental():
    with pytest.raises(ValueError):
        dc.FundamentalDiscriminant.from_disc(-12)
    fd = dc.FundamentalDiscriminant.from_disc(-4)
    assert (fd.modulus, fd.parity, str(fd)) == (4, 1, "-4")


def test_primes_and_spf():
    assert dc.primes_up_to(100).tolist() == list(sympy.primerange(2, 101))
    spf = dc.smallest_prime_factors(5000)
    for n in range(2, 5001):
        assert spf[n] == min(factorint(n))


@settings(max_examples=300, deadline=None)
@given(st.integers(-10**6, 10**6), st.integers(1, 10**6))
def test_kronecker_against_factorization(a, n):
    assert dc.kronecker(a, n) == kronecker_oracle(a, n)


@settings(max_examples=200, deadline=None)
@given(st.integers(-10**6, 10**6), st.integers(1, 10**5))
def test_kronecker_matches_jacobi_for_odd_n(a, k):
    n = 2 * k + 1
    assert dc.kronecker(a, n) == jacobi_symbol(a % n, n)


def test_character_table_is_real_primitive_character():
    for D in (-4, -3, -115147, 5, 12, 8):
        fd = dc.FundamentalDiscriminant.from_disc(D)
        tab = dc.character_table(fd, 400)
        assert tab[0] == 0 and tab[1] == 1
        for n in range(1, 400):
            assert tab[n] == dc.chi(fd, n) == kronecker_oracle(D, n)
        # completely multiplicative, and periodic mod |D| on the table range
        for m in range(1, 20):
            for n in range(1, 20):
                assert tab[m * n] == tab[m] * tab[n]
        if abs(D) < 200:
            assert np.array_equal(tab[1:200 - abs(D)], tab[1 + abs(D):200])
        # parity: chi(-1) = sign of D
        assert dc.kronecker(D, abs(D) - 1) == (1 if D > 0 else -1)

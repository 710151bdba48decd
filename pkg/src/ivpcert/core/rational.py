"""Exact rational helpers on top of gmpy2.mpq."""

from __future__ import annotations

from fractions import Fraction

import gmpy2
from gmpy2 import mpq, mpz

Q = mpq
ZERO = mpq(0)
ONE = mpq(1)


def q(value) -> mpq:
    """Coerce an int, str ('p/q', decimal, '1e-3'), Fraction or mpq to mpq.

    Floats are rejected: they almost always indicate a lost exact value.
    """
    if isinstance(value, float):
        raise TypeError("binary floats are not accepted as exact rationals")
    if isinstance(value, Fraction):
        return mpq(value.numerator, value.denominator)
    if isinstance(value, str):
        s = value.strip()
        try:
            return mpq(s)
        except ValueError:
            raise ValueError(f"not a rational literal: {value!r}") from None
    return mpq(value)


def to_str(x) -> str:
    """Canonical text form: 'p/q' in lowest terms, or 'p' for integers."""
    return str(mpq(x))


def floor(x) -> mpz:
    return mpq(x).numerator // mpq(x).denominator


def ceil(x) -> mpz:
    return -((-mpq(x).numerator) // mpq(x).denominator)


def round_down(x, bits: int) -> mpq:
    """Largest k/2^bits <= x (identity when the denominator already fits)."""
    x = mpq(x)
    if x.denominator <= (1 << bits):
        return x
    return mpq(floor(x * (1 << bits)), 1 << bits)


def round_up(x, bits: int) -> mpq:
    x = mpq(x)
    if x.denominator <= (1 << bits):
        return x
    return mpq(ceil(x * (1 << bits)), 1 << bits)


def sqrt_up(x, bits: int = 64) -> mpq:
    """Rational r >= sqrt(x) with r - sqrt(x) <= 2^-bits (for x >= 0)."""
    x = mpq(x)
    if x < 0:
        raise ValueError("sqrt of a negative rational")
    if x == 0:
        return mpq(0)
    num, den = x.numerator, x.denominator
    # exact squares stay exact
    rn, rd = gmpy2.isqrt(num), gmpy2.isqrt(den)
    if rn * rn == num and rd * rd == den:
        return mpq(rn, rd)
    scale = mpz(1) << (2 * bits)
    s = gmpy2.isqrt(num * scale // den)
    r = mpq(s, mpz(1) << bits)
    while r * r < x:
        r += mpq(1, mpz(1) << bits)
    return r


def sqrt_down(x, bits: int = 64) -> mpq:
    x = mpq(x)
    if x <= 0:
        return mpq(0)
    scale = mpz(1) << (2 * bits)
    s = gmpy2.isqrt(x.numerator * scale // x.denominator)
    return mpq(s, mpz(1) << bits)


def nearest(x, denom_bits: int) -> mpq:
    """Nearest k/2^denom_bits to x, ties to even k."""
    x = mpq(x)
    d = mpz(1) << denom_bits
    scaled = x * d
    lo = floor(scaled)
    frac = scaled - lo
    if frac > mpq(1, 2) or (frac == mpq(1, 2) and lo % 2 == 1):
        lo += 1
    return mpq(lo, d)


def to_float(x) -> float:
    return float(mpq(x))

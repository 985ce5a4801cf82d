"""Exact rational arithmetic helpers.

All metric data in this package is kept as exact rationals: graph metrics
are integers, sampled lines are integer multiples of their step.  Radii and
thresholds arrive as Fractions and get converted to integer bounds in the
space's quantum, so strict inequalities like d(x,p) < r never depend on
float rounding.
"""

from __future__ import annotations

import math
from fractions import Fraction

Rational = int | Fraction | str


def frac(value) -> Fraction:
    """Coerce ints, strings and exact binary floats to Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("bool is not a rational value")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, float):
        # floats are exact binary rationals; callers pass 0.5, 0.25 etc.
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as an exact rational")


def int_lt(bound: Fraction) -> int:
    """Largest integer d with d < bound."""
    f = math.floor(bound)
    return f - 1 if f == bound else f


def int_le(bound: Fraction) -> int:
    """Largest integer d with d <= bound."""
    return math.floor(bound)


def int_ge(bound: Fraction) -> int:
    """Smallest integer d with d >= bound."""
    return math.ceil(bound)


def int_gt(bound: Fraction) -> int:
    """Smallest integer d with d > bound."""
    c = math.ceil(bound)
    return c + 1 if c == bound else c


def quanta_lt(r, quantum: Fraction) -> int:
    """Largest integer k with k*quantum < r (-1 when no such k >= 0 exists)."""
    return int_lt(frac(r) / quantum)


def quanta_le(r, quantum: Fraction) -> int:
    return int_le(frac(r) / quantum)


def quanta_ge(r, quantum: Fraction) -> int:
    return int_ge(frac(r) / quantum)


def quanta_gt(r, quantum: Fraction) -> int:
    return int_gt(frac(r) / quantum)


def frac_gcd(a: Fraction, b: Fraction) -> Fraction:
    """gcd on rationals: largest c with a/c, b/c both integers."""
    if a == 0:
        return abs(b)
    if b == 0:
        return abs(a)
    num = math.gcd(a.numerator * b.denominator, b.numerator * a.denominator)
    den = a.denominator * b.denominator
    return Fraction(num, den)


def ceil_frac(x) -> int:
    return math.ceil(frac(x))


def encode_frac(x: Fraction) -> list[int]:
    """JSON encoding as an exact [numerator, denominator] pair."""
    f = frac(x)
    return [f.numerator, f.denominator]


def decode_frac(pair) -> Fraction:
    if isinstance(pair, (int, str)):
        return frac(pair)
    num, den = pair
    return Fraction(int(num), int(den))

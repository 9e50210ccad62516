"""Shared test helpers: set-partition enumeration and counting."""

import math
from fractions import Fraction

import numpy as np
import pytest


def set_partitions(items):
    """All set partitions of a list, as lists of blocks."""
    if len(items) == 1:
        yield [items]
        return
    first, rest = items[0], items[1:]
    for p in set_partitions(rest):
        for i in range(len(p)):
            yield p[:i] + [p[i] + [first]] + p[i + 1:]
        yield [[first]] + p


def shape_count(shape):
    """Number of set partitions of [n] with the given block-size multiset:
    n! / (prod_j n_j! * prod_r m_r!)."""
    n = sum(shape)
    count = math.factorial(n)
    for s in shape:
        count //= math.factorial(s)
    mult = {}
    for s in shape:
        mult[s] = mult.get(s, 0) + 1
    for m in mult.values():
        count //= math.factorial(m)
    return count


def all_shapes(n):
    """All partitions of the integer n, sorted descending."""
    shapes = set()
    for p in set_partitions(list(range(n))):
        shapes.add(tuple(sorted((len(b) for b in p), reverse=True)))
    return sorted(shapes)


def exact_gen_factorial(n, k, alpha: Fraction):
    """C(n, k, alpha) as an exact rational via the triangular recursion."""
    table = {(0, 0): Fraction(1)}
    for m in range(n):
        for j in range(0, min(m, k) + 1):
            v = table.get((m, j), Fraction(0))
            if v == 0:
                continue
            table[(m + 1, j)] = (table.get((m + 1, j), Fraction(0))
                                 + (m - j * alpha) * v)
            if j + 1 <= k:
                table[(m + 1, j + 1)] = (table.get((m + 1, j + 1), Fraction(0))
                                         + alpha * v)
    return table.get((n, k), Fraction(0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

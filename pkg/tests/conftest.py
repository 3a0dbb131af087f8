import itertools
from fractions import Fraction

import numpy as np
import pytest

from densecsp.core import random_instance
from densecsp.encodings.gb import GbInstance


def brute_min(inst):
    """Smallest objective over every assignment, by direct table lookups."""
    D, n = inst.domain_size, inst.n
    tab = inst.to_tables()
    best = None
    for x in itertools.product(range(D), repeat=n):
        total = 0
        for vars_, nums in zip(tab.vars.tolist(), tab.nums.tolist()):
            idx = 0
            for v in vars_:
                idx = idx * D + x[v]
            total += nums[idx]
        if best is None or total < best:
            best = total
    return Fraction(best, tab.eta)


def lit_count(bits, rows, cols):
    m = len(rows)
    return sum(int(bits[i][j]) ^ int(rows[i]) ^ int(cols[j]) for i in range(m) for j in range(m))


def random_board(rng, m):
    return GbInstance.from_bits(rng.integers(0, 2, size=(m, m)).astype(np.uint8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_instance(rng):
    return random_instance(6, 2, 2, rng, eta=3)

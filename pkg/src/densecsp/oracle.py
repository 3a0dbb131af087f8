"""Exact ground-truth solvers.

These deliberately avoid the evaluation kernels in :mod:`densecsp.core`: they
read raw table data and rebuild costs their own way (dense cost tensors, a
row-enumeration formula for GB, and a separate LCA routine for trees).
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from densecsp.core import CspInstance
from densecsp.encodings.gb import GbInstance
from densecsp.encodings.hier import HierProblem, Trunk
from densecsp.errors import CapExceededError, InvalidInputError

CSP_CAP = 2**24
GB_MAX_M = 24
HIER_CAP = 2**24
_TENSOR_LIMIT = 2**20


def naive_objective(inst: CspInstance, x: Sequence[int]) -> Fraction:
    """Table-by-table recount in plain Python."""
    tab = inst.to_tables()
    D = tab.domain_size
    total = 0
    for I, u in zip(tab.vars.tolist(), tab.nums.tolist()):
        idx = 0
        for v in I:
            idx = idx * D + int(x[v])
        total += u[idx]
    return Fraction(total, tab.eta)


def naive_b(inst: CspInstance, x: Sequence[int], v: int, i: int) -> Fraction:
    tab = inst.to_tables()
    D = tab.domain_size
    total = 0
    for I, u in zip(tab.vars.tolist(), tab.nums.tolist()):
        if v not in I:
            continue
        idx = 0
        for w in I:
            idx = idx * D + (i if w == v else int(x[w]))
        total += u[idx]
    return Fraction(total, tab.eta)


def _cost_tensor(vars_, nums, D: int, k: int, free: list[int], fixed: dict[int, int]) -> np.ndarray:
    axis = {v: a for a, v in enumerate(free)}
    tensor = np.zeros((D,) * len(free), dtype=np.int64)
    for I, u in zip(vars_, nums):
        table = u.reshape((D,) * k)
        key = tuple(slice(None) if w in axis else fixed[w] for w in I)
        sub = table[key]
        shape = [1] * len(free)
        for w in I:
            if w in axis:
                shape[axis[w]] = D
        tensor = tensor + np.asarray(sub).reshape(shape)
    return tensor


def exact_csp(
    inst: CspInstance, pinned: Mapping[int, int] | None = None, cap: int = CSP_CAP
) -> tuple[np.ndarray, Fraction]:
    """Constrained optimum; ties go to the lexicographically smallest assignment."""
    tab = inst.to_tables()
    n, D, k = tab.n, tab.domain_size, tab.k
    pinned = {int(v): int(a) for v, a in (pinned or {}).items()}
    for v, a in pinned.items():
        if not (0 <= v < n and 0 <= a < D):
            raise InvalidInputError(f"bad pin {v} -> {a}")
    free = [v for v in range(n) if v not in pinned]
    if D ** len(free) > cap:
        raise CapExceededError(f"exact_csp needs {D}^{len(free)} > cap {cap} assignments")
    vars_ = [tuple(r) for r in tab.vars.tolist()]
    nums = list(tab.nums)

    def search(free: list[int], fixed: dict[int, int]) -> tuple[int, dict[int, int]]:
        if D ** len(free) <= _TENSOR_LIMIT:
            tensor = _cost_tensor(vars_, nums, D, k, free, fixed)
            flat = int(np.argmin(tensor)) if tensor.size else 0
            values = np.unravel_index(flat, tensor.shape) if free else ()
            best = dict(fixed)
            best.update({v: int(a) for v, a in zip(free, values)})
            return int(tensor.reshape(-1)[flat]) if free else int(tensor), best
        best_cost, best_x = None, None
        head, rest = free[0], free[1:]
        for a in range(D):
            c, x = search(rest, {**fixed, head: a})
            if best_cost is None or c < best_cost:
                best_cost, best_x = c, x
        return best_cost, best_x

    cost, values = search(free, pinned)
    x = np.array([values[v] for v in range(n)], dtype=np.int64)
    return x, Fraction(cost, tab.eta)


def exact_gb(gb: GbInstance, max_m: int = GB_MAX_M, chunk: int = 1 << 14) -> tuple[np.ndarray, np.ndarray, Fraction]:
    """Enumerate row switches; each column then independently takes the
    cheaper of its two settings.  Returns 0/1 row and column switch vectors."""
    m = gb.m
    if m > max_m:
        raise CapExceededError(f"exact_gb limited to m <= {max_m}")
    bits = np.asarray(gb.bits, dtype=np.int64)
    colsum = bits.sum(axis=0)
    powers = 1 << np.arange(m - 1, -1, -1, dtype=np.int64)
    best_cost, best_r = None, None
    for start in range(0, 1 << m, chunk):
        idx = np.arange(start, min(1 << m, start + chunk), dtype=np.int64)
        R = (idx[:, None] & powers[None, :]) > 0
        R = R.astype(np.int64)
        lit = colsum[None, :] + R.sum(axis=1, keepdims=True) - 2 * (R @ bits)
        cost = np.minimum(lit, m - lit).sum(axis=1)
        i = int(np.argmin(cost))
        if best_cost is None or cost[i] < best_cost:
            best_cost, best_r = int(cost[i]), R[i]
    lit = colsum + best_r.sum() - 2 * (best_r @ bits)
    cols = (lit > m - lit).astype(np.int64)
    return best_r.copy(), cols, Fraction(best_cost)


def exact_gb_full(gb: GbInstance) -> int:
    """All 2^m x 2^m switch settings; only for tiny boards."""
    m = gb.m
    if m > 6:
        raise CapExceededError("full GB enumeration limited to m <= 6")
    bits = np.asarray(gb.bits)
    best = None
    for r in itertools.product((0, 1), repeat=m):
        for c in itertools.product((0, 1), repeat=m):
            lit = int((bits ^ np.array(r)[:, None] ^ np.array(c)[None, :]).sum())
            best = lit if best is None else min(best, lit)
    return best


def _lca_depths(M: int, d: int, parents: tuple[tuple[int, ...], ...]) -> np.ndarray:
    # chain[c][l]: ancestor of cluster c at depth l+1
    chains = []
    for c in range(d):
        up = [c]
        for level in reversed(parents):
            up.append(level[up[-1]])
        chains.append(up[::-1])
    out = np.zeros((d, d), dtype=np.int64)
    for i in range(d):
        for j in range(d):
            depth = 0
            while depth < M and chains[i][depth] == chains[j][depth]:
                depth += 1
            out[i, j] = depth
    return out


def exact_hier(hp: HierProblem, cap: int = HIER_CAP, chunk: int = 1 << 14) -> tuple[Trunk, np.ndarray, Fraction]:
    """Every labeled trunk times every leaf labeling; cost in units of 1/M."""
    n, M, d = hp.n, hp.M, hp.d
    levels = list(itertools.product(range(d), repeat=d))
    trunk_count = len(levels) ** (M - 1)
    if trunk_count * d**n > cap:
        raise CapExceededError(f"exact_hier needs {trunk_count} x {d}^{n} > cap {cap}")
    u, v = np.triu_indices(n, k=1)
    target = np.asarray(hp.F)[u, v]
    powers = d ** np.arange(n - 1, -1, -1, dtype=np.int64)
    best = None
    for parents in itertools.product(levels, repeat=M - 1):
        f = _lca_depths(M, d, parents)
        for start in range(0, d**n, chunk):
            idx = np.arange(start, min(d**n, start + chunk), dtype=np.int64)
            L = (idx[:, None] // powers[None, :]) % d
            cost = np.abs(f[L[:, u], L[:, v]] - target[None, :]).sum(axis=1)
            i = int(np.argmin(cost))
            if best is None or cost[i] < best[0]:
                best = (int(cost[i]), parents, L[i].copy())
    cost, parents, labels = best
    return Trunk(M, d, tuple(parents)), labels, Fraction(cost, M)

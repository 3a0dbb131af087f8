"""Additive-error subroutine with pinned variables and linear cost terms.

Two backends share one contract: given free variables ``T`` (everything else
pinned to ``base``) and optional per-value linear costs on ``T``, return a
completion whose cost is close to the constrained optimum.

* ``exact`` enumerates all ``D**|T|`` completions (refusing beyond ``cap``).
* ``sampled`` draws ``t`` free variables, enumerates their ``D**t`` values and
  extends each guess greedily over the remaining free variables in a random
  order, scoring each candidate value by the scaled cost against the already
  assigned variables plus its linear term.

Both work on a *reduced* problem over ``T`` only: the pinned variables are
substituted into the tables, which either leaves lower-arity pieces as
linear terms (k = 2) or spreads them uniformly over padding sets (any k).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from densecsp.core import Assignment, CspInstance, TableCsp, iter_assignments, local_weights
from densecsp.errors import CapExceededError, InvalidInputError
from densecsp.rng import make_rng

DEFAULT_CAP = 2**20
SAMPLE_CONSTANT = 4


# reduction ----------------------------------------------------------------


def _pieces(inst: TableCsp, base: np.ndarray, free: Sequence[int]):
    """Substitute pinned values into every table.

    Returns the constant numerator (tables inside the pinned set) and, per
    arity j >= 1, the local free-variable tuples J with their reduced tables of
    shape (G, D**j) in the local order of J.
    """
    D, k = inst.domain_size, inst.k
    loc = np.full(inst.n, -1, dtype=np.int64)
    loc[np.asarray(free, dtype=np.int64)] = np.arange(len(free))
    w = local_weights(k, D)
    if inst.n_tables == 0:
        return 0, {}
    lv = loc[inst.vars]  # (T, k) local index or -1
    is_free = lv >= 0
    pinned_idx = (np.where(is_free, 0, base[inst.vars]) * w).sum(axis=1)
    j_of = is_free.sum(axis=1)
    rows = np.arange(inst.n_tables)
    constant = int(inst.nums[rows[j_of == 0], pinned_idx[j_of == 0]].sum())
    groups = {}
    for j in range(1, k + 1):
        sel = np.flatnonzero(j_of == j)
        if sel.size == 0:
            continue
        pos = np.nonzero(is_free[sel])[1].reshape(-1, j)  # free positions per table
        J = np.take_along_axis(lv[sel], pos, axis=1)
        wj = w[pos]  # (G, j)
        Z = np.array(list(itertools.product(range(D), repeat=j)), dtype=np.int64)  # (D**j, j)
        idx = pinned_idx[sel][:, None] + (Z[None, :, :] * wj[:, None, :]).sum(axis=2)
        groups[j] = (J, inst.nums[sel[:, None], idx])
    return constant, groups


def _merge(J: np.ndarray, vals: np.ndarray, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Sum reduced tables sharing the same free tuple (J is sorted per row)."""
    keys = np.ravel_multi_index(J.T, (t,) * J.shape[1]) if J.shape[1] > 1 else J[:, 0]
    uniq, inv = np.unique(keys, return_inverse=True)
    merged = np.zeros((uniq.size, vals.shape[1]), dtype=np.int64)
    np.add.at(merged, inv, vals)
    if J.shape[1] > 1:
        Ju = np.stack(np.unravel_index(uniq, (t,) * J.shape[1]), axis=1)
    else:
        Ju = uniq[:, None]
    return Ju.astype(np.int64), merged


@dataclass
class Reduced:
    """A problem over the free variables only.

    ``cost(y) = (inst.objective_num(y) + linear[y]) / eta + constant``.
    """

    inst: TableCsp | None
    linear: np.ndarray  # (t, D) numerators over eta
    eta: int
    constant: Fraction
    free: tuple[int, ...]
    base: np.ndarray
    full: CspInstance | None = None  # set when |T| < k: evaluate on lifted assignments

    @property
    def t(self) -> int:
        return len(self.free)

    @property
    def domain_size(self) -> int:
        return int(self.linear.shape[1])

    def lift(self, y: Sequence[int]) -> Assignment:
        x = np.array(self.base, dtype=np.int64)
        x[list(self.free)] = np.asarray(y, dtype=np.int64)
        x.setflags(write=False)
        return x

    def cost_batch(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y, dtype=np.int64)
        lin = self.linear[np.arange(self.t)[None, :], Y].sum(axis=1) if self.t else 0
        if self.full is not None:
            X = np.repeat(self.base[None, :], Y.shape[0], axis=0)
            X[:, list(self.free)] = Y
            return self.full.objective_batch(X) + lin
        return self.inst.objective_batch(Y) + lin


def restrict_pairwise(
    inst: CspInstance, base: Sequence[int], free: Sequence[int], linear: np.ndarray | None = None
) -> Reduced:
    """k = 2 restriction: pinned-free pairs become linear terms on the free end."""
    tab = inst.to_tables()
    if tab.k != 2:
        raise InvalidInputError("pairwise restriction needs k = 2")
    base = np.asarray(base, dtype=np.int64)
    t, D = len(free), tab.domain_size
    constant, groups = _pieces(tab, base, free)
    lin = np.zeros((t, D), dtype=np.int64) if linear is None else np.array(linear, dtype=np.int64)
    if 1 in groups:
        J, vals = groups[1]
        np.add.at(lin, J[:, 0], vals)
    if 2 in groups:
        J, vals = _merge(*groups[2], t)
    else:
        J, vals = np.zeros((0, 2), dtype=np.int64), np.zeros((0, D * D), dtype=np.int64)
    sub = TableCsp(max(t, 2), 2, D, tab.eta, J, vals, normalized=False) if t >= 2 else None
    return Reduced(sub, lin, tab.eta, Fraction(constant, tab.eta), tuple(free), base)


@dataclass(frozen=True)
class PaddedSubproblem:
    """Objective restricted to free variables T with the rest fixed at ``base``.

    ``inst`` is an arity-k instance over local indices 0..|T|-1 whose numerators
    are over ``eta = eta_orig * scale``; ``constant`` is the mass of tables lying
    entirely in the fixed set.
    """

    inst: TableCsp
    free: tuple[int, ...]
    base: np.ndarray = field(repr=False)
    constant: Fraction
    scale: int

    def lift(self, y: Sequence[int]) -> Assignment:
        x = np.array(self.base, dtype=np.int64)
        x[list(self.free)] = np.asarray(y, dtype=np.int64)
        x.setflags(write=False)
        return x

    def value(self, y: Sequence[int]) -> Fraction:
        return Fraction(self.inst.objective_num(np.asarray(y)), self.inst.eta) + self.constant


def build_padded_subproblem(inst: CspInstance, base: Sequence[int], free: Sequence[int]) -> PaddedSubproblem:
    """Re-express ``Obj(R_T,y(base))`` as an arity-k instance over T plus a constant.

    A table meeting T in j >= 1 variables J contributes to every k-subset K of
    T containing J with weight ``1 / C(|T| - j, k - j)``.
    """
    tab = inst.to_tables()
    k, D = tab.k, tab.domain_size
    free = tuple(int(v) for v in free)
    t = len(free)
    if len(set(free)) != t:
        raise InvalidInputError("free variables must be distinct")
    if t < k:
        raise InvalidInputError(f"|T|={t} < k={k}: enumerate the free variables directly")
    base = np.array(base, dtype=np.int64)
    constant, groups = _pieces(tab, base, free)
    present = sorted(groups)
    scale = math.lcm(*(math.comb(t - j, k - j) for j in present)) if present else 1
    weight = {j: scale // math.comb(t - j, k - j) for j in present}

    if k == 2:
        G1 = np.zeros((t, D), dtype=np.int64)
        G2 = np.zeros((t, t, D, D), dtype=np.int64)
        if 1 in groups:
            J, vals = groups[1]
            np.add.at(G1, J[:, 0], vals * weight[1])
        if 2 in groups:
            J, vals = groups[2]
            np.add.at(G2, (J[:, 0], J[:, 1]), vals.reshape(-1, D, D) * weight[2])
        a, b = np.triu_indices(t, k=1)
        q = G2[a, b] + G1[a][:, :, None] + G1[b][:, None, :]
        q = q.reshape(-1, D * D)
        keep = q.any(axis=1)
        vars = np.stack([a, b], axis=1)[keep]
        nums = q[keep]
    else:
        acc: dict[tuple[int, ...], np.ndarray] = {}
        for j, (J, vals) in groups.items():
            for key, row in zip(map(tuple, J.tolist()), vals):
                prev = acc.get(key)
                row = row * weight[j]
                acc[key] = row if prev is None else prev + row
        vars_list, nums_list = [], []
        for K in itertools.combinations(range(t), k):
            total = np.zeros((D,) * k, dtype=np.int64)
            hit = False
            for j in present:
                for pos in itertools.combinations(range(k), j):
                    g = acc.get(tuple(K[p] for p in pos))
                    if g is None:
                        continue
                    hit = True
                    shape = [1] * k
                    for p in pos:
                        shape[p] = D
                    total = total + g.reshape(shape)
            if hit and total.any():
                vars_list.append(K)
                nums_list.append(total.reshape(-1))
        vars = np.array(vars_list, dtype=np.int64).reshape(-1, k)
        nums = np.array(nums_list, dtype=np.int64).reshape(-1, D**k)

    sub = TableCsp(t, k, D, tab.eta * scale, vars, nums, normalized=False)
    base.setflags(write=False)
    return PaddedSubproblem(sub, free, base, Fraction(constant, tab.eta), scale)


def q_bound(k: int, n_fixed: int, n_free: int) -> Fraction:
    """Upper bound ``sum_j C(k, j) C(|C|, k - j) / C(|T| - j, k - j)`` on any q_K."""
    return sum(
        (Fraction(math.comb(k, j) * math.comb(n_fixed, k - j), math.comb(n_free - j, k - j)) for j in range(1, k + 1)),
        Fraction(0),
    )


def reduce_problem(
    inst: CspInstance, base: Sequence[int], free: Sequence[int], linear: np.ndarray | None = None
) -> Reduced:
    base = np.asarray(base, dtype=np.int64)
    free = tuple(int(v) for v in free)
    t, D = len(free), inst.domain_size
    lin = np.zeros((t, D), dtype=np.int64) if linear is None else np.asarray(linear, dtype=np.int64)
    if t < inst.k or (t == inst.n and inst.n <= 2 * inst.k):
        return Reduced(None, lin, inst.eta, Fraction(0), free, base, full=inst)
    if inst.k == 2:
        return restrict_pairwise(inst, base, free, lin)
    padded = build_padded_subproblem(inst, base, free)
    return Reduced(padded.inst, lin * padded.scale, padded.inst.eta, padded.constant, free, base)


# solver -------------------------------------------------------------------


@dataclass(frozen=True)
class AdditiveBackend:
    kind: str = "exact"  # "exact" or "sampled"
    cap: int = DEFAULT_CAP
    sample_size: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("exact", "sampled"):
            raise InvalidInputError(f"unknown additive backend {self.kind!r}")


@dataclass
class AdditiveRequest:
    """Minimize ``Obj(x) + sum_{v in T} c(v, x_v)`` over x agreeing with
    ``base`` outside ``free``.  ``linear`` holds integer numerators over
    ``inst.eta`` with one row per free variable."""

    inst: CspInstance
    base: np.ndarray
    free: tuple[int, ...]
    linear: np.ndarray | None = None
    eps: Fraction = Fraction(1, 10)

    def __post_init__(self) -> None:
        self.base = np.asarray(self.base, dtype=np.int64)
        self.free = tuple(int(v) for v in self.free)
        if self.base.shape != (self.inst.n,):
            raise InvalidInputError("base assignment has the wrong length")
        if len(set(self.free)) != len(self.free) or any(not 0 <= v < self.inst.n for v in self.free):
            raise InvalidInputError("free variables must be distinct and in range")
        if self.linear is not None:
            self.linear = np.asarray(self.linear, dtype=np.int64)
            if self.linear.shape != (len(self.free), self.inst.domain_size) or (self.linear < 0).any():
                raise InvalidInputError("linear terms need shape (|T|, D) and non-negative entries")


@dataclass
class AdditiveResult:
    assignment: Assignment
    cost: Fraction
    evaluated: int = 0


def default_sample_size(eps: Fraction, domain_size: int, cap: int = DEFAULT_CAP) -> int:
    t = math.ceil(SAMPLE_CONSTANT / float(eps) ** 2) if eps > 0 else 10**9
    t_max = max(1, int(math.floor(math.log(cap) / math.log(domain_size) + 1e-9)))
    return max(1, min(t, t_max))


def _full_cost(req: AdditiveRequest, x: np.ndarray) -> Fraction:
    num = req.inst.objective_num(x)
    if req.linear is not None and req.free:
        num += int(req.linear[np.arange(len(req.free)), x[list(req.free)]].sum())
    return Fraction(num, req.inst.eta)


def _exact(red: Reduced, cap: int) -> tuple[np.ndarray, int]:
    D = red.domain_size
    total = D**red.t
    if total > cap:
        raise CapExceededError(f"exact additive solve needs {D}^{red.t} = {total} > cap {cap}")
    best_cost, best_y = None, None
    for Y in iter_assignments(red.t, D, chunk=max(1, min(1 << 15, total))):
        costs = red.cost_batch(Y)
        i = int(np.argmin(costs))
        if best_cost is None or costs[i] < best_cost:
            best_cost, best_y = int(costs[i]), Y[i].copy()
    return best_y, total


def _sampled(red: Reduced, domain_size: int, t_sample: int, rng: np.random.Generator, cap: int) -> tuple[np.ndarray, int]:
    t, D = red.t, domain_size
    t_sample = min(t_sample, t)
    if D**t_sample > cap:
        raise CapExceededError(f"sampled additive solve needs {D}^{t_sample} guesses > cap {cap}")
    perm = rng.permutation(t)
    W, rest = np.sort(perm[:t_sample]), perm[t_sample:]
    sub = red.inst
    k = sub.k if sub is not None else 1
    wts = local_weights(k, D) if sub is not None else None
    best_cost, best_y, evaluated = None, None, 0
    for z in itertools.product(range(D), repeat=t_sample):
        y = np.zeros(t, dtype=np.int64)
        assigned = np.zeros(t, dtype=bool)
        y[W] = z
        assigned[W] = True
        n_assigned = t_sample
        for v in rest:
            score = red.linear[v].copy()
            if sub is not None and n_assigned >= k - 1 and n_assigned > 0:
                ts = sub.incidence(int(v))
                if ts.size:
                    tv = sub.vars[ts]
                    others = assigned[tv] | (tv == v)
                    known = others.all(axis=1)
                    ts, tv = ts[known], tv[known]
                if ts.size:
                    pos = np.argmax(tv == v, axis=1)
                    w = wts[pos]
                    idx = (y[tv] * wts).sum(axis=1) - y[v] * w
                    partial = np.array([sub.nums[ts, idx + i * w].sum() for i in range(D)], dtype=np.int64)
                    # scale the assigned share of v's free tables up to all of them
                    total_sets = math.comb(t - 1, k - 1)
                    known_sets = math.comb(n_assigned, k - 1)
                    score = score * known_sets + partial * total_sets
            y[v] = int(np.argmin(score))
            assigned[v] = True
            n_assigned += 1
        c = int(red.cost_batch(y[None, :])[0])
        evaluated += 1
        if best_cost is None or c < best_cost:
            best_cost, best_y = c, y
    return best_y, evaluated


def additive_solve(req: AdditiveRequest, backend: AdditiveBackend = AdditiveBackend()) -> AdditiveResult:
    """Constrained minimization; the returned assignment agrees with ``base``
    outside ``free`` and its cost includes the linear terms."""
    base = np.array(req.base, dtype=np.int64)
    if not req.free:
        base.setflags(write=False)
        return AdditiveResult(base, _full_cost(req, base), 1)
    red = reduce_problem(req.inst, req.base, req.free, req.linear)
    if backend.kind == "exact":
        y, evaluated = _exact(red, backend.cap)
    else:
        t = backend.sample_size or default_sample_size(req.eps, req.inst.domain_size, backend.cap)
        y, evaluated = _sampled(red, req.inst.domain_size, t, make_rng(backend.seed), backend.cap)
    x = red.lift(y)
    return AdditiveResult(x, _full_cost(req, x), evaluated)

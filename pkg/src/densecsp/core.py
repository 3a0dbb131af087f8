"""Exact MIN-kCSP instances and their evaluation.

A penalty table stores integer numerators ``u_I`` over the instance-wide
scale ``eta`` so that ``p_I = u_I / eta`` lies in [0, 1].  All solver
comparisons happen on these integers; :class:`fractions.Fraction` is used at
API boundaries.

Local assignments of a table over sorted variables ``I = (i_0, ..., i_{k-1})``
are indexed row-major: ``sum_j x[i_j] * D**(k-1-j)``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy import sparse

from densecsp.errors import InvalidInputError, UnsupportedOperationError
from densecsp.rng import make_rng

Assignment = np.ndarray

EXHAUSTIVE_LIMIT = 2**20


def as_assignment(x: Sequence[int] | np.ndarray, n: int, domain_size: int) -> Assignment:
    arr = np.array(x, dtype=np.int64).reshape(-1)
    if arr.shape[0] != n:
        raise InvalidInputError(f"assignment has length {arr.shape[0]}, expected {n}")
    if arr.size and (arr.min() < 0 or arr.max() >= domain_size):
        raise InvalidInputError(f"assignment values must lie in 0..{domain_size - 1}")
    arr.setflags(write=False)
    return arr


def rewrite(x: Assignment, v: int, i: int, domain_size: int | None = None) -> Assignment:
    """Copy of ``x`` with variable ``v`` set to ``i``."""
    if not 0 <= v < len(x):
        raise InvalidInputError(f"variable {v} out of range")
    if i < 0 or (domain_size is not None and i >= domain_size):
        raise InvalidInputError(f"value {i} out of range")
    y = np.array(x, dtype=np.int64)
    y[v] = i
    y.setflags(write=False)
    return y


def local_weights(k: int, domain_size: int) -> np.ndarray:
    return domain_size ** np.arange(k - 1, -1, -1, dtype=np.int64)


def local_index(values: Sequence[int], domain_size: int) -> int:
    idx = 0
    for a in values:
        idx = idx * domain_size + int(a)
    return idx


def is_fragile_indicator(indicator: Sequence[int], k: int, domain_size: int) -> bool:
    """A 0/1 violation table is fragile iff along every axis line at most one
    entry is satisfied, i.e. ``p(R_vi) + p(R_vj) >= 1`` for all i != j."""
    t = np.asarray(indicator, dtype=np.int64).reshape((domain_size,) * k)
    for axis in range(k):
        satisfied = (t == 0).sum(axis=axis)
        if (satisfied > 1).any():
            return False
    return True


@dataclass(frozen=True)
class PenaltyTable:
    vars: tuple[int, ...]
    numerators: tuple[int, ...]


@dataclass(frozen=True)
class LogicalConstraint:
    """One constraint before merging: it contributes ``weight`` numerator units
    to its table wherever it is violated."""

    table: int
    weight: int
    fragile: bool


@dataclass(frozen=True)
class FragileDenseReport:
    passed: bool
    mode: str  # "exhaustive" or "sampled"
    checked: int
    min_ratio: Fraction | None
    witness: tuple[tuple[int, ...], int, int, int] | None = None


class CspInstance:
    """Common interface of explicit and implicit instances.

    Subclasses provide the numerator kernels; everything here is exact integer
    arithmetic over ``eta``.  ``cost_unit`` converts objective units into the
    native cost of the problem the instance was encoded from.
    """

    n: int
    k: int
    domain_size: int
    eta: int
    cost_unit: Fraction = Fraction(1)
    explicit: bool = True

    def _check(self) -> None:
        if self.domain_size < 2:
            raise InvalidInputError("domain size must be at least 2")
        if self.k < 1:
            raise InvalidInputError("arity must be positive")
        if self.n < self.k:
            raise InvalidInputError(f"n={self.n} is smaller than arity k={self.k}")
        if self.eta < 1:
            raise InvalidInputError("eta must be a positive integer")

    # kernels -----------------------------------------------------------
    def objective_num(self, x: Assignment) -> int:
        return int(self.objective_batch(np.asarray(x)[None, :])[0])

    def objective_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def b_matrix(self, x: Assignment) -> np.ndarray:
        """``B[v, i] = eta * b(x, v, i)`` for all variables and values."""
        return self.b_matrix_batch(np.asarray(x)[None, :])[0]

    def b_matrix_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def b_row(self, x: Assignment, v: int) -> np.ndarray:
        return self.b_matrix(x)[v]

    def unit_rows(self, S: tuple[int, ...], values: Sequence[int]) -> np.ndarray:
        """``U[v, i] = eta * p_{S + v}`` with S at ``values`` and v at i.

        Rows for ``v in S`` are zero (the union has fewer than k variables).
        """
        raise NotImplementedError

    def penalty(self, I: Sequence[int], values: Sequence[int]) -> int:
        raise NotImplementedError

    def to_tables(self) -> "TableCsp":
        raise NotImplementedError

    @property
    def n_tables(self) -> int:
        raise NotImplementedError

    def random_assignment(self, rng: np.random.Generator) -> Assignment:
        x = rng.integers(0, self.domain_size, size=self.n)
        x.setflags(write=False)
        return x


class TableCsp(CspInstance):
    """Explicit instance: one numerator table per k-subset that has any
    constraint.

    Parameters
    ----------
    vars : (T, k) array of sorted, distinct variable indices
    nums : (T, D**k) array of integer numerators
    constraints : per-logical-constraint fragility metadata; when omitted each
        table is decomposed into ``eta`` threshold layers ``1{u >= l}``.
    normalized : enforce ``0 <= u <= eta``.  Padded subproblems switch this off
        because their weights are not normalized.
    """

    def __init__(
        self,
        n: int,
        k: int,
        domain_size: int,
        eta: int,
        vars: np.ndarray,
        nums: np.ndarray,
        constraints: Sequence[LogicalConstraint] | None = None,
        cost_unit: Fraction | int = 1,
        normalized: bool = True,
    ) -> None:
        self.n, self.k, self.domain_size, self.eta = int(n), int(k), int(domain_size), int(eta)
        self.cost_unit = Fraction(cost_unit)
        self._check()
        vars = np.array(vars, dtype=np.int64).reshape(-1, self.k)
        nums = np.array(nums, dtype=np.int64).reshape(-1, self.domain_size**self.k)
        if vars.shape[0] != nums.shape[0]:
            raise InvalidInputError("vars and numerators disagree on the table count")
        if vars.size:
            if vars.min() < 0 or vars.max() >= self.n:
                raise InvalidInputError("table variable out of range")
            if self.k > 1 and (np.diff(vars, axis=1) <= 0).any():
                raise InvalidInputError("table variables must be sorted and distinct")
            if self.n ** self.k < 2**62:
                keys = np.ravel_multi_index(vars.T, (self.n,) * self.k) if self.k > 1 else vars[:, 0]
                distinct = np.unique(keys).size
            else:
                distinct = len({tuple(r) for r in vars.tolist()})
            if distinct != vars.shape[0]:
                raise InvalidInputError("at most one table per variable subset")
        if nums.size and nums.min() < 0:
            raise InvalidInputError("numerators must be non-negative")
        if normalized and nums.size and nums.max() > self.eta:
            raise InvalidInputError(f"numerators must lie in [0, eta={self.eta}]")
        self.normalized = normalized
        vars.setflags(write=False)
        nums.setflags(write=False)
        self.vars = vars
        self.nums = nums
        self._weights = local_weights(self.k, self.domain_size)
        self._constraints = None if constraints is None else tuple(constraints)
        self._incidence: list[np.ndarray] | None = None
        self._sparse: list[sparse.csr_matrix] | None = None
        self._lookup: dict[tuple[int, ...], int] | None = None

    # structure ---------------------------------------------------------
    @property
    def n_tables(self) -> int:
        return int(self.vars.shape[0])

    @property
    def tables(self) -> list[PenaltyTable]:
        return [
            PenaltyTable(tuple(v), tuple(u))
            for v, u in zip(self.vars.tolist(), self.nums.tolist())
        ]

    @property
    def constraints(self) -> tuple[LogicalConstraint, ...]:
        if self._constraints is None:
            out = []
            for t in range(self.n_tables):
                for level in range(1, self.eta + 1):
                    layer = (self.nums[t] >= level).astype(np.int64)
                    if layer.any():
                        out.append(
                            LogicalConstraint(t, 1, is_fragile_indicator(layer, self.k, self.domain_size))
                        )
            self._constraints = tuple(out)
        return self._constraints

    def incidence(self, v: int) -> np.ndarray:
        """Indices of tables containing ``v``."""
        if self._incidence is None:
            flat = self.vars.reshape(-1)
            order = np.argsort(flat, kind="stable")
            counts = np.bincount(flat, minlength=self.n)
            starts = np.concatenate([[0], np.cumsum(counts)])
            tables = order // self.k
            self._incidence = [tables[starts[u] : starts[u + 1]] for u in range(self.n)]
        return self._incidence[v]

    def _position_matrices(self) -> list[sparse.csr_matrix]:
        if self._sparse is None:
            T = self.n_tables
            rows = np.arange(T)
            ones = np.ones(T, dtype=np.int64)
            self._sparse = [
                sparse.csr_matrix((ones, (self.vars[:, j], rows)), shape=(self.n, T))
                for j in range(self.k)
            ]
        return self._sparse

    def table_index(self, I: Sequence[int]) -> int:
        if self._lookup is None:
            self._lookup = {tuple(r): t for t, r in enumerate(self.vars.tolist())}
        return self._lookup.get(tuple(int(u) for u in I), -1)

    # kernels -----------------------------------------------------------
    def _base_index(self, X: np.ndarray) -> np.ndarray:
        return (X[:, self.vars] * self._weights).sum(axis=2)

    def objective_num(self, x: Assignment) -> int:
        if self.n_tables == 0:
            return 0
        idx = (np.asarray(x)[self.vars] * self._weights).sum(axis=1)
        return int(self.nums[np.arange(self.n_tables), idx].sum())

    def objective_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64)
        if self.n_tables == 0:
            return np.zeros(X.shape[0], dtype=np.int64)
        idx = self._base_index(X)
        return self.nums[np.arange(self.n_tables)[None, :], idx].sum(axis=1)

    def b_matrix_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64)
        B, D = X.shape[0], self.domain_size
        out = np.zeros((B, self.n, D), dtype=np.int64)
        if self.n_tables == 0:
            return out
        base = self._base_index(X)
        rows = np.arange(self.n_tables)[None, :]
        mats = self._position_matrices()
        for j in range(self.k):
            w = self._weights[j]
            stripped = base - X[:, self.vars[:, j]] * w
            for i in range(D):
                vals = self.nums[rows, stripped + i * w]  # (B, T)
                out[:, :, i] += np.asarray(mats[j] @ vals.T).T
        return out

    def b_row(self, x: Assignment, v: int) -> np.ndarray:
        x = np.asarray(x)
        ts = self.incidence(v)
        out = np.zeros(self.domain_size, dtype=np.int64)
        if ts.size == 0:
            return out
        tv = self.vars[ts]
        pos = np.argmax(tv == v, axis=1)
        w = self._weights[pos]
        idx = (x[tv] * self._weights).sum(axis=1) - x[v] * w
        for i in range(self.domain_size):
            out[i] = self.nums[ts, idx + i * w].sum()
        return out

    def unit_rows(self, S: tuple[int, ...], values: Sequence[int]) -> np.ndarray:
        D = self.domain_size
        out = np.zeros((self.n, D), dtype=np.int64)
        if len(S) != self.k - 1:
            raise InvalidInputError(f"sample subsets must have size k-1={self.k - 1}")
        if self.k == 1:
            for t, (v,) in enumerate(self.vars.tolist()):
                out[v] += self.nums[t]
            return out
        ts = self.incidence(S[0])
        if ts.size == 0:
            return out
        tv = self.vars[ts]
        Sarr = np.asarray(S)
        member = np.isin(tv, Sarr)
        keep = member.sum(axis=1) == len(S)
        ts, tv, member = ts[keep], tv[keep], member[keep]
        if ts.size == 0:
            return out
        vpos = np.argmax(~member, axis=1)
        vvar = tv[np.arange(len(ts)), vpos]
        value_of = dict(zip(S, (int(a) for a in values)))
        vals = np.zeros_like(tv)
        for c in range(self.k):
            col = tv[:, c]
            vals[:, c] = [value_of.get(int(u), 0) for u in col]
        idx = (vals * self._weights).sum(axis=1)
        w = self._weights[vpos]
        for i in range(D):
            out[vvar, i] += self.nums[ts, idx + i * w]
        return out

    def penalty(self, I: Sequence[int], values: Sequence[int]) -> int:
        if len(I) != self.k:
            return 0
        order = np.argsort(I)
        I = [int(I[o]) for o in order]
        values = [int(values[o]) for o in order]
        t = self.table_index(I)
        if t < 0:
            return 0
        return int(self.nums[t, local_index(values, self.domain_size)])

    def to_tables(self) -> "TableCsp":
        return self

    # serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "k": self.k,
            "domain_size": self.domain_size,
            "eta": self.eta,
            "tables": [
                {"vars": v, "numerators": u}
                for v, u in zip(self.vars.tolist(), self.nums.tolist())
            ],
        }
        if self.cost_unit != 1:
            d["cost_unit"] = str(self.cost_unit)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TableCsp":
        try:
            n, k, D, eta = int(d["n"]), int(d["k"]), int(d["domain_size"]), int(d["eta"])
            tables = d["tables"]
            vars = np.array([t["vars"] for t in tables], dtype=np.int64).reshape(-1, k)
            nums = np.array([t["numerators"] for t in tables], dtype=np.int64).reshape(-1, D**k)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed instance JSON: {exc}") from exc
        return cls(n, k, D, eta, vars, nums, cost_unit=Fraction(d.get("cost_unit", 1)))


class CspBuilder:
    """Accumulates logical constraints and merges them per variable subset."""

    def __init__(self, n: int, k: int, domain_size: int) -> None:
        self.n, self.k, self.domain_size = n, k, domain_size
        self._tables: dict[tuple[int, ...], np.ndarray] = {}
        self._logical: list[tuple[tuple[int, ...], int, bool]] = []

    def add(self, vars: Sequence[int], indicator: Sequence[int] | np.ndarray, weight: int = 1) -> None:
        """Add a constraint over ``vars`` (any order) given as a 0/1 violation
        table indexed in the order of ``vars``."""
        vars = [int(v) for v in vars]
        if len(vars) != self.k or len(set(vars)) != self.k:
            raise InvalidInputError(f"constraint needs {self.k} distinct variables, got {vars}")
        if min(vars) < 0 or max(vars) >= self.n:
            raise InvalidInputError(f"constraint variable out of range: {vars}")
        D = self.domain_size
        t = np.asarray(indicator, dtype=np.int64).reshape((D,) * self.k)
        if ((t != 0) & (t != 1)).any():
            raise InvalidInputError("indicator entries must be 0 or 1")
        order = np.argsort(vars)
        key = tuple(vars[o] for o in order)
        t = np.transpose(t, order).reshape(-1)
        acc = self._tables.setdefault(key, np.zeros(D**self.k, dtype=np.int64))
        acc += weight * t
        self._logical.append((key, int(weight), is_fragile_indicator(t, self.k, D)))

    def build(self, eta: int | None = None, weight_unit: int = 1) -> TableCsp:
        """Merge into tables.  ``eta`` defaults to the largest merged numerator;
        one native cost unit equals ``weight_unit`` numerator units."""
        keys = sorted(self._tables)
        index = {key: t for t, key in enumerate(keys)}
        vars = np.array(keys, dtype=np.int64).reshape(-1, self.k)
        nums = np.array([self._tables[key] for key in keys], dtype=np.int64).reshape(
            -1, self.domain_size**self.k
        )
        max_num = int(nums.max()) if nums.size else 0
        if eta is None:
            eta = max(1, max_num)
        cost_unit = Fraction(eta, weight_unit)
        constraints = [LogicalConstraint(index[key], w, f) for key, w, f in self._logical]
        return TableCsp(
            self.n, self.k, self.domain_size, eta, vars, nums, constraints, cost_unit=cost_unit
        )


# public operations --------------------------------------------------------


def _checked(inst: CspInstance, x) -> Assignment:
    return as_assignment(x, inst.n, inst.domain_size)


def objective(inst: CspInstance, x) -> Fraction:
    """``Obj(x) = sum_I p_I(x)`` exactly."""
    return Fraction(inst.objective_num(_checked(inst, x)), inst.eta)


def problem_cost(inst: CspInstance, x) -> Fraction:
    """Objective converted to the native cost of the encoded problem."""
    return objective(inst, x) * inst.cost_unit


def b_value(inst: CspInstance, x, v: int, i: int) -> Fraction:
    """``b(x, v, i)``: penalty of the tables containing v with v set to i."""
    x = _checked(inst, x)
    if not 0 <= v < inst.n:
        raise InvalidInputError(f"variable {v} out of range")
    if not 0 <= i < inst.domain_size:
        raise InvalidInputError(f"value {i} out of range")
    return Fraction(int(inst.b_row(x, v)[i]), inst.eta)


def iter_assignments(n: int, domain_size: int, chunk: int = 4096) -> Iterator[np.ndarray]:
    """All ``domain_size**n`` assignments in lexicographic order, in chunks."""
    total = domain_size**n
    powers = domain_size ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        yield (idx[:, None] // powers[None, :]) % domain_size


def verify_fragile_dense(
    inst: CspInstance,
    delta: Fraction | float | str,
    trials: int = 1000,
    rng_seed: int = 0,
    exhaustive_limit: int = EXHAUSTIVE_LIMIT,
) -> FragileDenseReport:
    """Check ``b(x,v,i) + b(x,v,j) >= delta * C(n-1, k-1)`` for distinct i, j.

    Exhaustive over all assignments when ``D**n <= exhaustive_limit`` (a proof);
    otherwise over ``trials`` random assignments (refutation only).
    """
    delta = Fraction(delta)
    if not 0 < delta <= 1:
        raise InvalidInputError("delta must lie in (0, 1]")
    D, n = inst.domain_size, inst.n
    unit = math.comb(n - 1, inst.k - 1) * inst.eta
    # pass iff (B_i + B_j) * den >= num * unit
    need = delta.numerator * unit
    pairs = [(i, j) for i in range(D) for j in range(i + 1, D)]
    pi = np.array([p[0] for p in pairs])
    pj = np.array([p[1] for p in pairs])

    if D**n <= exhaustive_limit:
        mode = "exhaustive"
        batches: Iterable[np.ndarray] = iter_assignments(n, D)
    else:
        mode = "sampled"
        rng = make_rng(rng_seed)
        batches = (
            rng.integers(0, D, size=(min(256, trials - s), n)) for s in range(0, trials, 256)
        )

    checked = 0
    lowest: int | None = None
    for X in batches:
        Bm = inst.b_matrix_batch(X)  # (B, n, D)
        sums = Bm[:, :, pi] + Bm[:, :, pj]  # (B, n, P)
        m = int(sums.min())
        lowest = m if lowest is None else min(lowest, m)
        bad = sums * delta.denominator < need
        if bad.any():
            b, v, p = map(int, np.argwhere(bad)[0])
            return FragileDenseReport(
                False,
                mode,
                checked + b + 1,
                Fraction(lowest, unit),
                (tuple(int(a) for a in X[b]), v, int(pi[p]), int(pj[p])),
            )
        checked += X.shape[0]
    return FragileDenseReport(True, mode, checked, None if lowest is None else Fraction(lowest, unit))


def count_fragile_constraints(inst: CspInstance, v: int) -> int:
    """Total weight (numerator units) of fragile logical constraints containing v."""
    if not inst.explicit:
        raise UnsupportedOperationError("fragile constraint counts need an explicit instance")
    assert isinstance(inst, TableCsp)
    if not 0 <= v < inst.n:
        raise InvalidInputError(f"variable {v} out of range")
    containing = set(inst.incidence(v).tolist())
    return sum(c.weight for c in inst.constraints if c.fragile and c.table in containing)


def certified_delta(inst: TableCsp) -> Fraction:
    """Largest delta certified by per-variable fragile constraint counts."""
    unit = inst.eta * math.comb(inst.n - 1, inst.k - 1)
    return Fraction(min(count_fragile_constraints(inst, v) for v in range(inst.n)), unit)


def save_instance(inst: CspInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(inst.to_tables().to_dict()))


def load_instance(path: str | Path) -> TableCsp:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: not valid JSON ({exc})") from exc
    return TableCsp.from_dict(d)


def random_instance(
    n: int,
    k: int,
    domain_size: int,
    rng: np.random.Generator,
    eta: int = 1,
    density: float = 1.0,
) -> TableCsp:
    """Random tables on a ``density`` fraction of all k-subsets."""
    subsets = [I for I in itertools.combinations(range(n), k) if rng.random() < density]
    vars = np.array(subsets, dtype=np.int64).reshape(-1, k)
    nums = rng.integers(0, eta + 1, size=(len(subsets), domain_size**k))
    return TableCsp(n, k, domain_size, eta, vars, nums)

"""Hierarchical (and correlation) clustering as rigid MIN-2CSPs.

An M-level clustering has its root at depth 0, internal nodes at depths
1..M and objects at depth M+1.  Each depth 1..M has ``d`` labeled slots (some
possibly childless); the depth-M slots are the clusters.  The trunk is fixed
by the parent of every slot at depths 2..M.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from densecsp.core import TableCsp
from densecsp.errors import InvalidInputError


@dataclass(frozen=True)
class Trunk:
    M: int
    d: int
    # parents[l][node] is the depth-(l+1) parent of slot `node` at depth l+2
    parents: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self) -> None:
        if self.M < 1 or self.d < 1:
            raise InvalidInputError("trunk needs M >= 1 and d >= 1")
        if len(self.parents) != self.M - 1:
            raise InvalidInputError(f"trunk with M={self.M} needs {self.M - 1} parent arrays")
        for level in self.parents:
            if len(level) != self.d or any(not 0 <= p < self.d for p in level):
                raise InvalidInputError(f"parent arrays must have {self.d} entries in 0..{self.d - 1}")

    def ancestors(self, cluster: int) -> list[int]:
        """Slots on the path from depth M (index 0) up to depth 1."""
        if not 0 <= cluster < self.d:
            raise InvalidInputError(f"cluster {cluster} out of range 0..{self.d - 1}")
        path = [cluster]
        for level in reversed(self.parents):
            path.append(level[path[-1]])
        return path

    @cached_property
    def f_matrix(self) -> np.ndarray:
        out = np.zeros((self.d, self.d), dtype=np.int64)
        paths = [self.ancestors(c) for c in range(self.d)]
        for i in range(self.d):
            for j in range(self.d):
                depth = 0
                for step, (a, b) in enumerate(zip(paths[i], paths[j])):
                    if a == b:
                        depth = self.M - step
                        break
                out[i, j] = depth
        out.setflags(write=False)
        return out

    def to_list(self) -> list[list[int]]:
        return [list(level) for level in self.parents]


def trunk_f(trunk: Trunk, i: int, j: int) -> int:
    """Depth of the lowest common ancestor of clusters i and j."""
    if not (0 <= i < trunk.d and 0 <= j < trunk.d):
        raise InvalidInputError(f"cluster labels must lie in 0..{trunk.d - 1}")
    return int(trunk.f_matrix[i, j])


def enumerate_trunks(d: int, M: int) -> list[Trunk]:
    """All labeled trunks: every parent array at every non-root level."""
    if d < 1 or M < 1:
        raise InvalidInputError("need d >= 1 and M >= 1")
    levels = list(itertools.product(range(d), repeat=d))
    return [Trunk(M, d, tuple(choice)) for choice in itertools.product(levels, repeat=M - 1)]


@dataclass(frozen=True, eq=False)
class HierProblem:
    n: int
    M: int
    d: int
    F: np.ndarray

    def __post_init__(self) -> None:
        F = np.array(self.F, dtype=np.int64)
        if self.M < 1 or self.d < 1 or self.n < 2:
            raise InvalidInputError("need n >= 2, M >= 1, d >= 1")
        if F.shape != (self.n, self.n):
            raise InvalidInputError(f"F must be {self.n}x{self.n}")
        off = ~np.eye(self.n, dtype=bool)
        if not (F[off] == F.T[off]).all():
            raise InvalidInputError("F must be symmetric")
        if F[off].min() < 0 or F[off].max() > self.M:
            raise InvalidInputError(f"F entries must lie in 0..{self.M}")
        np.fill_diagonal(F, self.M)
        F.setflags(write=False)
        object.__setattr__(self, "F", F)


def cc_problem(adjacency: np.ndarray, d: int) -> HierProblem:
    """Correlation clustering: the M=1 case with F = adjacency."""
    A = np.asarray(adjacency, dtype=np.int64)
    return HierProblem(A.shape[0], 1, d, A)


def hier_to_rigid_csp(hp: HierProblem, trunk: Trunk) -> TableCsp:
    """Pair tables ``|f(i, j) - F(u, v)|`` over ``eta = M`` on the trunk's clusters."""
    if trunk.M != hp.M:
        raise InvalidInputError(f"trunk has {trunk.M} levels, problem has {hp.M}")
    if trunk.d > hp.d:
        raise InvalidInputError(f"trunk has {trunk.d} clusters, budget is {hp.d}")
    if trunk.d < 2:
        raise InvalidInputError("hierarchical encoding needs d >= 2 clusters")
    u, v = np.triu_indices(hp.n, k=1)
    fm = trunk.f_matrix.reshape(-1)
    nums = np.abs(fm[None, :] - hp.F[u, v][:, None])
    return TableCsp(hp.n, 2, trunk.d, hp.M, np.stack([u, v], axis=1), nums)


def tree_cost_num(hp: HierProblem, trunk: Trunk, labels: Sequence[int]) -> int:
    """``M * cost`` of the clustering given by a trunk and leaf parents."""
    lab = np.asarray(labels, dtype=np.int64)
    u, v = np.triu_indices(hp.n, k=1)
    return int(np.abs(hp.F[u, v] - trunk.f_matrix[lab[u], lab[v]]).sum())


def hierarchy_partitions(trunk: Trunk, labels: Sequence[int]) -> tuple[frozenset, ...]:
    """Object partitions at depths M..1; equal for two clusterings iff they are
    the same tree up to relabeling of internal nodes."""
    out = []
    lab = [int(c) for c in labels]
    paths = {c: trunk.ancestors(c) for c in set(lab)}
    for step in range(trunk.M):
        groups: dict[int, set[int]] = {}
        for obj, c in enumerate(lab):
            groups.setdefault(paths[c][step], set()).add(obj)
        out.append(frozenset(frozenset(g) for g in groups.values()))
    return tuple(out)


def parse_hier(text: str, d: int | None = None) -> HierProblem:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    try:
        n, M, dd = (int(t) for t in rows[0])
        F = np.array([[int(t) for t in r] for r in rows[1 : n + 1]], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        raise InvalidInputError("hierarchical file needs 'n M d' then n rows of n integers") from exc
    if F.shape != (n, n):
        raise InvalidInputError("hierarchical file needs n rows of n integers")
    return HierProblem(n, M, d if d is not None else dd, F)


def format_hier(hp: HierProblem) -> str:
    body = "\n".join(" ".join(str(int(a)) for a in row) for row in hp.F)
    return f"{hp.n} {hp.M} {hp.d}\n{body}\n"


def load_hier(path: str | Path) -> HierProblem:
    return parse_hier(Path(path).read_text())

"""Encoders for the fragile problem families and their direct evaluators.

Each ``*_to_csp`` builds merged tables through :class:`CspBuilder`, which
keeps per-constraint fragility flags.  The encoded instance's ``cost_unit`` is
chosen so that :func:`densecsp.core.problem_cost` equals the direct count.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from densecsp.core import CspBuilder, TableCsp
from densecsp.errors import InvalidInputError


# nearest codeword ---------------------------------------------------------


@dataclass(frozen=True)
class NcpInstance:
    """XOR equations ``x_{i1} + ... + x_{ij} = rhs`` over F_2."""

    n: int
    equations: tuple[tuple[tuple[int, ...], int], ...]

    def __post_init__(self) -> None:
        eqs = []
        for idx, rhs in self.equations:
            idx = tuple(int(i) for i in idx)
            if not idx or len(set(idx)) != len(idx):
                raise InvalidInputError(f"equation indices must be distinct and non-empty: {idx}")
            if min(idx) < 0 or max(idx) >= self.n:
                raise InvalidInputError(f"equation index out of range: {idx}")
            if rhs not in (0, 1):
                raise InvalidInputError("equation right-hand side must be 0 or 1")
            eqs.append((idx, int(rhs)))
        object.__setattr__(self, "equations", tuple(eqs))

    def violated(self, x: Sequence[int]) -> int:
        x = np.asarray(x, dtype=np.int64)
        return sum(int(x[list(idx)].sum() % 2 != rhs) for idx, rhs in self.equations)


def _xor_indicator(arity: int, rhs: int, active: int) -> np.ndarray:
    """Violation table over ``arity`` variables where only the first ``active``
    enter the equation (the rest are padding)."""
    grid = np.array(list(itertools.product((0, 1), repeat=arity)), dtype=np.int64)
    return (grid[:, :active].sum(axis=1) % 2 != rhs).astype(np.int64)


def ncp_to_csp(ncp: NcpInstance, k: int) -> TableCsp:
    """Arity-k CSP for an XOR system.

    Shorter equations are spread uniformly over every padding set of k - j
    extra variables, each copy weighted ``W / C(n - j, k - j)`` with ``W`` the
    lcm of those binomials.
    """
    if ncp.n < k:
        raise InvalidInputError(f"need at least k={k} variables")
    arities = {len(idx) for idx, _ in ncp.equations}
    if arities and max(arities) > k:
        raise InvalidInputError(f"equation arity {max(arities)} exceeds k={k}")
    copies = {j: math.comb(ncp.n - j, k - j) for j in arities}
    W = math.lcm(*copies.values()) if copies else 1
    builder = CspBuilder(ncp.n, k, 2)
    for idx, rhs in ncp.equations:
        j = len(idx)
        if j == k:
            builder.add(idx, _xor_indicator(k, rhs, k), W)
            continue
        rest = [u for u in range(ncp.n) if u not in idx]
        ind = _xor_indicator(k, rhs, j)
        for pad in itertools.combinations(rest, k - j):
            builder.add(idx + pad, ind, W // copies[j])
    return builder.build(weight_unit=W)


def parse_ncp(text: str) -> NcpInstance:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    try:
        n, m = int(rows[0][0]), int(rows[0][1])
        eqs = [(tuple(int(t) for t in r[1:]), int(r[0])) for r in rows[1 : m + 1]]
    except (IndexError, ValueError) as exc:
        raise InvalidInputError("NCP file needs 'n m' then lines 'rhs i1 ... ik'") from exc
    if len(eqs) != m:
        raise InvalidInputError(f"NCP file declares {m} equations, found {len(eqs)}")
    return NcpInstance(n, tuple(eqs))


def format_ncp(ncp: NcpInstance) -> str:
    lines = [f"{ncp.n} {len(ncp.equations)}"]
    lines += [" ".join(map(str, (rhs, *idx))) for idx, rhs in ncp.equations]
    return "\n".join(lines) + "\n"


# unique games -------------------------------------------------------------


@dataclass(frozen=True)
class UgpInstance:
    """Edge (u, v, pi) is satisfied iff ``x_u == pi[x_v]``."""

    n: int
    colors: int
    edges: tuple[tuple[int, int, tuple[int, ...]], ...]

    def __post_init__(self) -> None:
        for u, v, pi in self.edges:
            if u == v or not (0 <= u < self.n and 0 <= v < self.n):
                raise InvalidInputError(f"bad edge ({u}, {v})")
            if sorted(pi) != list(range(self.colors)):
                raise InvalidInputError(f"edge ({u}, {v}) permutation {pi} is not a bijection")

    def violated(self, x: Sequence[int]) -> int:
        return sum(int(x[u] != pi[x[v]]) for u, v, pi in self.edges)


def ugp_to_csp(ugp: UgpInstance) -> TableCsp:
    D = ugp.colors
    builder = CspBuilder(ugp.n, 2, D)
    a, b = np.divmod(np.arange(D * D), D)
    for u, v, pi in ugp.edges:
        builder.add((u, v), (a != np.asarray(pi)[b]).astype(np.int64))
    return builder.build()


# MIN-kSAT as DNF ----------------------------------------------------------


@dataclass(frozen=True)
class DnfInstance:
    """Conjunctions of ``(variable, negated)`` literals; each one is satisfied
    iff every negated variable is 0 and every other variable is 1."""

    n: int
    k: int
    conjunctions: tuple[tuple[tuple[int, bool], ...], ...]

    def __post_init__(self) -> None:
        for conj in self.conjunctions:
            vs = [v for v, _ in conj]
            if len(vs) != self.k or len(set(vs)) != self.k:
                raise InvalidInputError(f"conjunction needs {self.k} distinct variables: {conj}")
            if min(vs) < 0 or max(vs) >= self.n:
                raise InvalidInputError(f"conjunction variable out of range: {conj}")

    def violated(self, x: Sequence[int]) -> int:
        return sum(
            int(any(int(x[v]) != (0 if neg else 1) for v, neg in conj)) for conj in self.conjunctions
        )


def minksat_to_csp(dnf: DnfInstance) -> TableCsp:
    builder = CspBuilder(dnf.n, dnf.k, 2)
    for conj in dnf.conjunctions:
        pattern = [0 if neg else 1 for _, neg in conj]
        ind = np.ones(2**dnf.k, dtype=np.int64)
        ind[int("".join(map(str, pattern)), 2)] = 0
        builder.add([v for v, _ in conj], ind)
    return builder.build()


# multiway cut -------------------------------------------------------------


@dataclass(frozen=True)
class MultiwayCut:
    """Edges must be monochromatic and terminals must carry their color."""

    n: int
    colors: int
    edges: tuple[tuple[int, int], ...]
    terminals: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for u, v in self.edges:
            if u == v or not (0 <= u < self.n and 0 <= v < self.n):
                raise InvalidInputError(f"bad edge ({u}, {v})")
        for t, c in self.terminals.items():
            if not (0 <= t < self.n and 0 <= c < self.colors):
                raise InvalidInputError(f"bad terminal {t} -> {c}")

    def violated(self, x: Sequence[int]) -> int:
        def ok(node: int) -> bool:
            return node not in self.terminals or x[node] == self.terminals[node]

        return sum(int(not (x[u] == x[v] and ok(u) and ok(v))) for u, v in self.edges)


def multiway_cut_to_csp(mc: MultiwayCut) -> TableCsp:
    D = mc.colors
    builder = CspBuilder(mc.n, 2, D)
    a, b = np.divmod(np.arange(D * D), D)
    for u, v in mc.edges:
        sat = a == b
        if u in mc.terminals:
            sat &= a == mc.terminals[u]
        if v in mc.terminals:
            sat &= b == mc.terminals[v]
        builder.add((u, v), (~sat).astype(np.int64))
    return builder.build()


# JSON problem files for the encoders without a text format ------------------


def problem_from_dict(kind: str, d: dict):
    try:
        if kind == "ugp":
            return UgpInstance(
                int(d["n"]), int(d["colors"]), tuple((int(u), int(v), tuple(p)) for u, v, p in d["edges"])
            )
        if kind == "ksat":
            return DnfInstance(
                int(d["n"]),
                int(d["k"]),
                tuple(tuple((int(v), bool(neg)) for v, neg in c) for c in d["conjunctions"]),
            )
        if kind == "mwc":
            return MultiwayCut(
                int(d["n"]),
                int(d["colors"]),
                tuple((int(u), int(v)) for u, v in d["edges"]),
                {int(t): int(c) for t, c in d.get("terminals", {}).items()},
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"malformed {kind} problem: {exc}") from exc
    raise InvalidInputError(f"unknown problem kind {kind!r}")


def load_ncp(path: str | Path) -> NcpInstance:
    return parse_ncp(Path(path).read_text())

"""Planted-solution instance generators.

Each generator starts from a known zero-cost solution and perturbs it with
independent noise, so the planted cost is an upper bound on OPT.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from densecsp.core import TableCsp, objective, verify_fragile_dense
from densecsp.encodings.gb import GbInstance
from densecsp.encodings.hier import HierProblem, Trunk, tree_cost_num
from densecsp.encodings.problems import (
    DnfInstance,
    NcpInstance,
    UgpInstance,
    minksat_to_csp,
    ncp_to_csp,
    ugp_to_csp,
)
from densecsp.errors import InvalidInputError
from densecsp.rng import make_rng

TEMPLATES = ("ncp", "ugp", "ksat")


def _check_noise(p: float, upper: float = 1.0) -> None:
    if not 0 <= p < upper:
        raise InvalidInputError(f"noise must lie in [0, {upper})")


def planted_switches(x_signs: np.ndarray, y_signs: np.ndarray) -> np.ndarray:
    """CSP assignment (row switches, then column switches) for sign vectors."""
    return np.concatenate([(np.asarray(x_signs) < 0), (np.asarray(y_signs) < 0)]).astype(np.int64)


def gen_planted_gb(m: int, noise: float, seed: int) -> tuple[GbInstance, np.ndarray, np.ndarray]:
    """``M = x y^T`` with entries negated independently with probability ``noise``."""
    if m < 1:
        raise InvalidInputError("m must be positive")
    _check_noise(noise, 0.5)
    rng = make_rng(seed)
    x = rng.choice(np.array([-1, 1]), size=m)
    y = rng.choice(np.array([-1, 1]), size=m)
    flip = rng.random((m, m)) < noise
    M = np.where(flip, -1, 1) * np.outer(x, y)
    return GbInstance.from_signs(M), x, y


@dataclass
class PlantedCsp:
    inst: TableCsp
    planted: np.ndarray
    planted_cost: Fraction
    problem: object


def gen_planted_csp(
    n: int,
    k: int,
    domain_size: int,
    density: float,
    template: str,
    noise: float,
    seed: int,
    delta: Fraction | float | None = None,
    trials: int = 200,
) -> PlantedCsp:
    """Random planted instance from one of the fragile templates.

    ``density`` is the probability that a k-subset carries a constraint.  With
    ``delta`` set, the result must pass :func:`verify_fragile_dense`.
    """
    if template not in TEMPLATES:
        raise InvalidInputError(f"template must be one of {TEMPLATES}")
    if not 0 < density <= 1:
        raise InvalidInputError("density must lie in (0, 1]")
    _check_noise(noise)
    if template in ("ncp", "ksat") and domain_size != 2:
        raise InvalidInputError(f"{template} template is boolean")
    if template == "ugp" and k != 2:
        raise InvalidInputError("ugp template has arity 2")
    if delta is not None and Fraction(delta) > Fraction(density).limit_denominator(10**6):
        raise InvalidInputError(f"density {density} cannot support delta {delta}")
    rng = make_rng(seed)
    x = rng.integers(0, domain_size, size=n)
    subsets = [I for I in itertools.combinations(range(n), k) if rng.random() < density]

    if template == "ncp":
        eqs = []
        for I in subsets:
            rhs = int(x[list(I)].sum() % 2) ^ int(rng.random() < noise)
            eqs.append((I, rhs))
        problem = NcpInstance(n, tuple(eqs))
        inst = ncp_to_csp(problem, k)
    elif template == "ugp":
        edges = []
        for u, v in subsets:
            pi = rng.permutation(domain_size)
            # force pi[x_v] == x_u, or away from it under noise
            want = int(x[u])
            if rng.random() < noise:
                want = int((x[u] + rng.integers(1, domain_size)) % domain_size)
            j = int(np.flatnonzero(pi == want)[0])
            pi[j], pi[x[v]] = pi[x[v]], pi[j]
            edges.append((u, v, tuple(int(a) for a in pi)))
        problem = UgpInstance(n, domain_size, tuple(edges))
        inst = ugp_to_csp(problem)
    else:
        conjs = []
        for I in subsets:
            lits = [(v, bool(x[v] == 0)) for v in I]
            if rng.random() < noise:
                j = int(rng.integers(0, k))
                lits[j] = (lits[j][0], not lits[j][1])
            conjs.append(tuple(lits))
        problem = DnfInstance(n, k, tuple(conjs))
        inst = minksat_to_csp(problem)

    if delta is not None:
        report = verify_fragile_dense(inst, delta, trials=trials, rng_seed=seed)
        if not report.passed:
            raise InvalidInputError(
                f"generated instance is not {delta}-fragile-dense (min ratio {report.min_ratio})"
            )
    x.setflags(write=False)
    return PlantedCsp(inst, x, objective(inst, x), problem)


@dataclass
class PlantedHier:
    problem: HierProblem
    trunk: Trunk
    labels: np.ndarray
    planted_cost: Fraction


def gen_planted_hier(n: int, M: int, d: int, noise: float, seed: int) -> PlantedHier:
    """Random trunk, every cluster used, F from the tree, then each pair moves
    one step up or down within 0..M with probability ``noise``."""
    if n < max(2, d):
        raise InvalidInputError("need n >= max(2, d) so every cluster can be non-empty")
    if M < 1 or d < 1:
        raise InvalidInputError("need M >= 1 and d >= 1")
    _check_noise(noise)
    rng = make_rng(seed)
    parents = tuple(tuple(int(p) for p in rng.integers(0, d, size=d)) for _ in range(M - 1))
    trunk = Trunk(M, d, parents)
    labels = np.concatenate([np.arange(d), rng.integers(0, d, size=n - d)])
    labels = rng.permutation(labels).astype(np.int64)
    F = trunk.f_matrix[labels[:, None], labels[None, :]].copy()
    u, v = np.triu_indices(n, k=1)
    moved = rng.random(u.size) < noise
    step = np.where(rng.random(u.size) < 0.5, -1, 1)
    vals = F[u, v]
    step = np.where(vals + step < 0, 1, np.where(vals + step > M, -1, step))
    vals = np.where(moved, vals + step, vals)
    F[u, v] = vals
    F[v, u] = vals
    hp = HierProblem(n, M, d, F)
    labels.setflags(write=False)
    return PlantedHier(hp, trunk, labels, Fraction(tree_cost_num(hp, trunk, labels), M))

"""Recursive scheme for rigid MIN-2CSP, and hierarchical clustering on top.

A frame works on a tricky set T with everything else pinned by y.  It solves
the constrained problem additively and stops if that is already expensive
(or the depth limit is reached).  Otherwise it samples s vertices of T,
and for each guess of their values estimates b over T (sampled term scaled by
|T|/s plus the exact pinned term), runs one exact greedy round, pins the
clear-cut vertices and recurses on the rest.

Children are memoized by (depth, T', y'), and each frame's sample stream is
keyed by that content, so the result does not depend on visiting order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from densecsp.additive import AdditiveBackend, AdditiveRequest, additive_solve, restrict_pairwise
from densecsp.core import CspInstance
from densecsp.encodings.hier import HierProblem, Trunk, enumerate_trunks, hier_to_rigid_csp, tree_cost_num
from densecsp.errors import CapExceededError, InvalidInputError, InvariantViolation
from densecsp.fragile import clear_mask
from densecsp.report import PhaseTimer, SolveReport
from densecsp.rng import keyed_rng

DEFAULT_GUESS_CAP = 2**16


def auto_samples(delta: Fraction, domain_size: int) -> int:
    """``ceil(432^2 |D|^4 ln(1440 |D|^3 / delta) / (2 delta^4))``."""
    delta = Fraction(delta)
    D = domain_size
    return math.ceil(432**2 * D**4 * math.log(1440 * D**3 / delta) / (2 * float(delta) ** 4))


@dataclass(frozen=True)
class RigidPtasParams:
    eps: Fraction
    delta: Fraction
    samples: int | None = None
    max_depth: int | None = None  # default |D| + 1
    seed: int = 0
    guess_cap: int = DEFAULT_GUESS_CAP
    additive: AdditiveBackend = field(default_factory=AdditiveBackend)
    force_recursion: bool = False  # diagnostic: ignore the cost threshold

    def __post_init__(self) -> None:
        object.__setattr__(self, "eps", Fraction(self.eps))
        object.__setattr__(self, "delta", Fraction(self.delta))
        if self.eps <= 0:
            raise InvalidInputError("eps must be positive")
        if not 0 < self.delta <= 1:
            raise InvalidInputError("delta must lie in (0, 1]")
        if self.samples is not None and self.samples < 1:
            raise InvalidInputError("sample count must be positive")

    def sample_count(self, domain_size: int) -> int:
        return self.samples if self.samples is not None else auto_samples(self.delta, domain_size)

    def depth_limit(self, domain_size: int) -> int:
        return self.max_depth if self.max_depth is not None else domain_size + 1

    def describe(self) -> dict:
        d = asdict(self)
        d["additive"] = asdict(self.additive)
        return d


@dataclass
class RecursionFrame:
    T: tuple[int, ...]
    y: np.ndarray  # full length; entries on T are ignored
    depth: int

    def key(self) -> tuple:
        pinned = np.delete(self.y, list(self.T)) if self.T else self.y
        return (self.depth, self.T, pinned.tobytes())


class _Context:
    def __init__(self, inst, params, timer, reference):
        self.inst = inst
        self.params = params
        self.timer = timer
        self.s = params.sample_count(inst.domain_size)
        self.depth_limit = params.depth_limit(inst.domain_size)
        self.memo: dict[tuple, tuple[np.ndarray, Fraction]] = {}
        self.frames = 0
        self.branching = 0
        self.memo_hits = 0
        self.reference = reference
        self.principal: list[dict] = []
        self.info: dict[tuple, dict] = {}
        self.obvious = None
        if reference is not None:
            self.obvious = _obvious_vertices(inst, reference, params.delta)


def _obvious_vertices(inst: CspInstance, xs: np.ndarray, delta: Fraction) -> dict[int, np.ndarray]:
    """Per optimal cluster i, the vertices of that cluster that are
    ``delta |C_i| / 3``-clear at x*."""
    B = inst.b_matrix(xs)
    out = {}
    for i in range(inst.domain_size):
        members = np.flatnonzero(xs == i)
        if members.size == 0:
            out[i] = members
            continue
        margin_num = delta.numerator * members.size * inst.eta
        mask = clear_mask(B[members], xs[members], margin_num, 3 * delta.denominator)
        out[i] = members[mask]
    return out


def _finished_clusters(ctx: _Context, T: Sequence[int]) -> int:
    Tset = np.zeros(ctx.inst.n, dtype=bool)
    Tset[list(T)] = True
    return sum(int(not Tset[v].any()) for v in ctx.obvious.values())


def _additive(ctx: _Context, frame: RecursionFrame, eps: Fraction, salt: int):
    b = ctx.params.additive
    if b.kind == "sampled":
        b = replace(b, seed=int(keyed_rng(b.seed, *frame.key()[:2], salt).integers(2**31)))
    req = AdditiveRequest(ctx.inst, frame.y, frame.T, None, eps)
    with ctx.timer.phase("additive"):
        return additive_solve(req, b)


def cc_recurse(frame: RecursionFrame, ctx: _Context, principal: bool = False) -> tuple[np.ndarray, Fraction]:
    """Best assignment found below this frame; always agrees with y off T."""
    key = frame.key()
    if key in ctx.memo:
        ctx.memo_hits += 1
        if principal and key in ctx.info:
            ctx.principal.append(ctx.info[key])
        return ctx.memo[key]
    ctx.frames += 1
    inst, params = ctx.inst, ctx.params
    D, delta, eps = inst.domain_size, params.delta, params.eps
    T = frame.T
    t = len(T)
    threshold = delta**3 * t * t / (6 * 72**2 * D**3)
    budget = eps / (1 + eps) * threshold
    local = _additive(ctx, frame, budget / max(1, t) ** 2, 0)
    best = (local.assignment, local.cost)
    if ctx.obvious is not None:
        ctx.info[key] = {
            "depth": frame.depth,
            "tricky": t,
            "finished": _finished_clusters(ctx, T),
            "local_cost": local.cost,
        }
        if principal:
            ctx.principal.append(ctx.info[key])

    if params.force_recursion:
        stop = t == 0 or frame.depth >= ctx.depth_limit
    else:
        stop = t == 0 or frame.depth >= ctx.depth_limit or local.cost >= threshold or local.cost == 0
    if stop:
        ctx.memo[key] = best
        return best

    ctx.branching += 1
    s = ctx.s
    if D**s > params.guess_cap:
        raise CapExceededError(f"{D}^s = {D}^{s} guesses exceed the guess cap {params.guess_cap}; choose a smaller s")
    rng = keyed_rng(params.seed, frame.depth, T, key[2])
    Tarr = np.asarray(T, dtype=np.int64)
    drawn = Tarr[rng.integers(0, t, size=s)]
    sampled = sorted(set(drawn.tolist()))

    with ctx.timer.phase("dense"):
        pinned_rows = restrict_pairwise(inst, frame.y, T).linear  # sum over pinned u of p_{u v}(y_u, i)
    margin_num = delta.numerator * t * inst.eta
    margin_den = 12 * D * delta.denominator

    with ctx.timer.phase("guess"):
        for values in itertools.product(range(D), repeat=len(sampled)):
            guess = dict(zip(sampled, values))
            with ctx.timer.phase("dense"):
                sample_rows = np.zeros((inst.n, D), dtype=np.int64)
                for v in drawn.tolist():
                    sample_rows += inst.unit_rows((v,), (guess[v],))
            # compare |T|/s * sampled + pinned, scaled by s
            est = t * sample_rows[Tarr] + s * pinned_rows
            x1 = np.array(frame.y, dtype=np.int64)
            x1[Tarr] = np.argmin(est, axis=1)
            with ctx.timer.phase("dense"):
                B1 = inst.b_matrix(x1)[Tarr]
            x2T = np.argmin(B1, axis=1)
            clear = clear_mask(B1, x2T, margin_num, margin_den)
            y2 = np.array(frame.y, dtype=np.int64)
            y2[Tarr[clear]] = x2T[clear]
            child = RecursionFrame(tuple(int(v) for v in Tarr[~clear]), y2, frame.depth + 1)
            on_path = principal and all(ctx.reference[v] == guess[v] for v in sampled)
            x, c = cc_recurse(child, ctx, on_path)
            if c < best[1]:
                best = (x, c)
            if best[1] == 0 and not params.force_recursion:
                break  # nothing can beat zero

    fixed = np.delete(np.arange(inst.n), Tarr)
    if (best[0][fixed] != frame.y[fixed]).any():
        raise InvariantViolation("frame result disagrees with its pinned assignment")
    ctx.memo[key] = best
    return best


def solve_rigid(
    inst: CspInstance,
    params: RigidPtasParams,
    reference: Sequence[int] | None = None,
    timer: PhaseTimer | None = None,
) -> SolveReport:
    if inst.k != 2:
        raise InvalidInputError("the rigid scheme needs a binary-arity instance")
    timer = timer or PhaseTimer()
    ref = None if reference is None else np.asarray(reference, dtype=np.int64)
    ctx = _Context(inst, params, timer, ref)
    root = RecursionFrame(tuple(range(inst.n)), np.zeros(inst.n, dtype=np.int64), 0)
    x, cost = cc_recurse(root, ctx, principal=ref is not None)
    bound = (inst.domain_size**ctx.s) ** (inst.domain_size + 1)
    if ctx.branching > bound:
        raise InvariantViolation(f"{ctx.branching} branching frames exceed (|D|^s)^(|D|+1) = {bound}")
    trace = {
        "samples": ctx.s,
        "frames": ctx.frames,
        "branching_frames": ctx.branching,
        "memo_hits": ctx.memo_hits,
        "frame_bound": bound,
    }
    if ref is not None:
        trace["principal_path"] = ctx.principal
    return SolveReport(
        solver="rigid",
        cost=cost,
        assignment=np.asarray(x, dtype=np.int64),
        params=params.describe(),
        seed=params.seed,
        timing=timer.as_dict(),
        trace=trace,
        problem_cost=cost * inst.cost_unit,
    )


def solve_hierarchical(
    hp: HierProblem, params: RigidPtasParams, dedup: bool = True, timer: PhaseTimer | None = None
) -> SolveReport:
    """Solve the rigid instance of every trunk with delta = 1/M; keep the best tree."""
    timer = timer or PhaseTimer()
    params = replace(params, delta=Fraction(1, hp.M))
    trunks = enumerate_trunks(hp.d, hp.M)
    if hp.d == 1:
        trunk, labels = trunks[0], np.zeros(hp.n, dtype=np.int64)
        cost = Fraction(tree_cost_num(hp, trunk, labels), hp.M)
        return _hier_report(hp, params, trunk, labels, cost, timer, {"trunks": 1, "solved": 0})
    best = None
    solved = 0
    seen: dict[bytes, tuple[np.ndarray, Fraction]] = {}
    for trunk in trunks:
        fkey = trunk.f_matrix.tobytes()
        if dedup and fkey in seen:
            labels, cost = seen[fkey]
        else:
            rep = solve_rigid(hier_to_rigid_csp(hp, trunk), params, timer=timer)
            labels, cost = rep.assignment, rep.cost
            seen[fkey] = (labels, cost)
            solved += 1
        if best is None or cost < best[2]:
            best = (trunk, labels, cost)
    trunk, labels, cost = best
    return _hier_report(hp, params, trunk, labels, cost, timer, {"trunks": len(trunks), "solved": solved})


def _hier_report(hp, params, trunk: Trunk, labels, cost, timer, trace) -> SolveReport:
    trace = dict(trace)
    trace["trunk"] = trunk.to_list()
    return SolveReport(
        solver="hier",
        cost=cost,
        assignment=np.asarray(labels, dtype=np.int64),
        params=params.describe(),
        seed=params.seed,
        timing=timer.as_dict(),
        trace=trace,
        problem_cost=cost,
    )

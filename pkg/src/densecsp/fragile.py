"""Approximation scheme for fragile-dense MIN-kCSP.

Outline of :func:`solve_fragile`:

1. additive pre-pass; if its cost clears the threshold ``C(n,k) delta^2/72k``
   it is returned as is;
2. otherwise draw ``s`` random (k-1)-subsets (with replacement) and, for every
   guess of the sampled variables, run two simultaneous greedy rounds
   (estimated b-values, then exact b-values), freeze the clear-cut variables
   and finish the rest with a constrained additive solve.

All margin tests are integer comparisons on numerators over ``eta``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from densecsp.additive import AdditiveBackend, AdditiveRequest, additive_solve
from densecsp.core import Assignment, CspInstance
from densecsp.errors import CapExceededError, InvalidInputError, InvariantViolation
from densecsp.report import PhaseTimer, SolveReport
from densecsp.rng import floyd_subset, make_rng

DEFAULT_GUESS_CAP = 2**16
GUESS_BATCH = 64


def auto_samples(delta: Fraction, domain_size: int, k: int) -> int:
    """``ceil(18 ln(480 |D| k / delta) / delta^2)``."""
    delta = Fraction(delta)
    return math.ceil(18 * math.log(480 * domain_size * k / delta) / float(delta) ** 2)


@dataclass(frozen=True)
class FragilePtasParams:
    eps: Fraction
    delta: Fraction
    samples: int | None = None  # None: use auto_samples
    guess_cap: int = DEFAULT_GUESS_CAP
    seed: int = 0
    additive: AdditiveBackend = field(default_factory=AdditiveBackend)
    skip_prepass: bool = False  # diagnostic: always run the sampling branch

    def __post_init__(self) -> None:
        object.__setattr__(self, "eps", Fraction(self.eps))
        object.__setattr__(self, "delta", Fraction(self.delta))
        if self.eps <= 0:
            raise InvalidInputError("eps must be positive")
        if not 0 < self.delta <= 1:
            raise InvalidInputError("delta must lie in (0, 1]")
        if self.samples is not None and self.samples < 1:
            raise InvalidInputError("sample count must be positive")

    def sample_count(self, domain_size: int, k: int) -> int:
        return self.samples if self.samples is not None else auto_samples(self.delta, domain_size, k)

    def describe(self) -> dict:
        d = asdict(self)
        d["additive"] = asdict(self.additive)
        return d


# building blocks -------------------------------------------------------------


def draw_samples(rng: np.random.Generator, n: int, k: int, s: int) -> list[tuple[int, ...]]:
    """``s`` uniform (k-1)-subsets of range(n), with replacement."""
    return [floyd_subset(rng, n, k - 1) for _ in range(s)]


def b_hat_numerators(
    inst: CspInstance, samples: Sequence[tuple[int, ...]], guess: dict[int, int]
) -> np.ndarray:
    """``sum_j U_j`` where ``U_j[v, i] = eta * p_{S_j + v}`` at the guess.

    The estimate itself is this matrix times ``C(n, k-1) / (s * eta)``; the
    positive scale does not affect an arg-min.
    """
    out = np.zeros((inst.n, inst.domain_size), dtype=np.int64)
    cache: dict[tuple, np.ndarray] = {}
    for S in samples:
        try:
            vals = tuple(guess[u] for u in S)
        except KeyError as exc:
            raise InvalidInputError(f"sampled variable {exc.args[0]} has no guessed value") from None
        key = (S, vals)
        if key not in cache:
            cache[key] = inst.unit_rows(S, vals)
        out += cache[key]
    return out


def estimate_b_hat(
    inst: CspInstance, samples: Sequence[tuple[int, ...]], guess: dict[int, int], v: int, i: int
) -> Fraction:
    """``(C(n, k-1) / s) * sum_j p_{S_j + v}(R_vi(guess))`` exactly."""
    total = 0
    for S in samples:
        if v in S:
            continue  # union has fewer than k variables
        try:
            vals = [guess[u] for u in S]
        except KeyError as exc:
            raise InvalidInputError(f"sampled variable {exc.args[0]} has no guessed value") from None
        I = list(S) + [v]
        total += inst.penalty(I, vals + [i])
    return Fraction(math.comb(inst.n, inst.k - 1) * total, len(samples) * inst.eta)


def greedy_round(
    inst: CspInstance,
    x_prev: Assignment | None = None,
    mode: str = "from-exact-b",
    estimates: np.ndarray | None = None,
) -> Assignment:
    """Re-decide every variable simultaneously; ties go to the lowest value."""
    if mode == "from-estimates":
        if estimates is None:
            raise InvalidInputError("from-estimates needs an estimate matrix")
        B = np.asarray(estimates)
    elif mode == "from-exact-b":
        if x_prev is None:
            raise InvalidInputError("from-exact-b needs the previous assignment")
        B = inst.b_matrix(np.asarray(x_prev))
    else:
        raise InvalidInputError(f"unknown greedy mode {mode!r}")
    x = np.argmin(B, axis=1).astype(np.int64)
    x.setflags(write=False)
    return x


def clear_mask(B: np.ndarray, x2: np.ndarray, margin_num: int, margin_den: int) -> np.ndarray:
    """``B[v, x2_v] < B[v, j] - margin`` for every j != x2_v, with the margin
    given as the fraction ``margin_num / margin_den`` of numerator units."""
    B = np.asarray(B, dtype=np.int64)
    if B.shape[1] == 2:
        first = np.asarray(x2) == 0
        gap = np.where(first, B[:, 1] - B[:, 0], B[:, 0] - B[:, 1])
        return gap * margin_den > margin_num
    rows = np.arange(B.shape[0])
    own = B[rows, x2]
    gap = B - own[:, None]
    gap[rows, x2] = np.iinfo(np.int64).max // max(1, margin_den)
    return (gap.min(axis=1) * margin_den > margin_num) if B.shape[1] > 1 else np.ones(B.shape[0], bool)


def extract_clearcut(
    inst: CspInstance, x1: Assignment, x2: Assignment, delta: Fraction, B1: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Variables whose value in x2 beats every alternative against x1 by more
    than ``delta * C(n-1, k-1) / 6``.  Returns (C, T) as sorted index arrays."""
    delta = Fraction(delta)
    if B1 is None:
        B1 = inst.b_matrix(np.asarray(x1))
    unit = math.comb(inst.n - 1, inst.k - 1) * inst.eta
    mask = clear_mask(B1, np.asarray(x2), delta.numerator * unit, 6 * delta.denominator)
    return np.flatnonzero(mask), np.flatnonzero(~mask)


class _SampleUnits:
    """Unit rows of every sample at every local value combination, so the
    estimate matrices for a batch of guesses are one gather and a sum."""

    def __init__(self, inst: CspInstance, samples: Sequence[tuple[int, ...]], union: Sequence[int]) -> None:
        D, r = inst.domain_size, inst.k - 1
        pos = {u: j for j, u in enumerate(union)}
        self.cols = np.array([[pos[u] for u in S] for S in samples], dtype=np.int64).reshape(len(samples), r)
        self.weights = D ** np.arange(r - 1, -1, -1, dtype=np.int64)
        combos = list(itertools.product(range(D), repeat=r))
        self.table = np.stack(
            [np.stack([inst.unit_rows(S, c) for c in combos]) for S in samples]
        )  # (s, D**r, n, D)

    def estimates(self, G: np.ndarray) -> np.ndarray:
        """Estimate numerators for guesses G of shape (B, |union|)."""
        local = (G[:, self.cols] * self.weights).sum(axis=2)  # (B, s)
        s = self.table.shape[0]
        return self.table[np.arange(s)[None, :], local].sum(axis=1)


# solver ----------------------------------------------------------------------


def _additive(inst, base, free, eps, backend, timer, seed_offset=0):
    with timer.phase("additive"):
        req = AdditiveRequest(inst, base, tuple(int(v) for v in free), None, eps)
        b = backend if backend.kind == "exact" else AdditiveBackend(
            backend.kind, backend.cap, backend.sample_size, backend.seed + seed_offset
        )
        return additive_solve(req, b)


def solve_fragile(
    inst: CspInstance,
    params: FragilePtasParams,
    reference: Sequence[int] | None = None,
    timer: PhaseTimer | None = None,
) -> SolveReport:
    """Run the scheme; ``reference`` (e.g. a planted or oracle optimum) only
    adds corruption counts to the trace."""
    timer = timer or PhaseTimer()
    n, k, D = inst.n, inst.k, inst.domain_size
    eps, delta = params.eps, params.delta
    ref = None if reference is None else np.asarray(reference, dtype=np.int64)
    nk = math.comb(n, k)
    trace: dict = {}

    with timer.phase("other"):
        # pre-pass budget eps' in units of C(n, k), rescaled to n^k for the backend
        eps_prime = eps / (1 + eps) * delta**2 / (72 * k)
        threshold = Fraction(nk) * delta**2 / (72 * k)
        trace["threshold"] = threshold
        s = params.sample_count(D, k)
        trace["samples"] = s
        guesses = D ** (s * (k - 1))
        if guesses > params.guess_cap:
            raise CapExceededError(
                f"{D}^(s(k-1)) = {D}^{s * (k - 1)} guesses exceed the guess cap {params.guess_cap}; choose a smaller s"
            )

        pre = None
        if not params.skip_prepass:
            pre = _additive(inst, np.zeros(n, dtype=np.int64), range(n), eps_prime * nk / n**k, params.additive, timer)
            trace["prepass_cost"] = pre.cost
            if pre.cost >= threshold:
                trace["branch"] = "prepass"
                return _report(inst, params, pre.assignment, pre.cost, timer, trace)
        trace["branch"] = "sampling"

        rng = make_rng(params.seed)
        samples = draw_samples(rng, n, k, s)
        union = sorted({u for S in samples for u in S})
        trace["sample_sets"] = [list(S) for S in samples]
        unit = math.comb(n - 1, k - 1) * inst.eta
        records = []
        best = None

    with timer.phase("sample"):
        units = _SampleUnits(inst, samples, union)
    all_guesses = itertools.product(range(D), repeat=len(union))
    g = 0
    with timer.phase("guess"):
        while True:
            chunk = list(itertools.islice(all_guesses, GUESS_BATCH))
            if not chunk:
                break
            guesses = [dict(zip(union, values)) for values in chunk]
            # "sample" touches only the sampled constraints; "dense" sweeps all
            # of them, batched over the chunk so per-call overhead stays small
            with timer.phase("sample"):
                X1 = np.argmin(units.estimates(np.asarray(chunk, dtype=np.int64)), axis=2)
            with timer.phase("dense"):
                B1s = inst.b_matrix_batch(X1)
            X2 = np.argmin(B1s, axis=2).astype(np.int64)
            # clear-cut test for the whole chunk at once (same rule as extract_clearcut)
            mask = clear_mask(
                B1s.reshape(-1, D), X2.reshape(-1), delta.numerator * unit, 6 * delta.denominator
            ).reshape(len(chunk), n)
            parts = [(np.flatnonzero(mask[j]), np.flatnonzero(~mask[j])) for j in range(len(chunk))]
            X3 = X2.copy()
            claimed = {}
            for j in range(len(chunk)):
                T = parts[j][1]
                # finishing budget eps |T| delta C(n-1, k-1) / 3n, relative to |T|^k
                if T.size:
                    with timer.phase("additive"):
                        budget = eps * T.size * delta * math.comb(n - 1, k - 1) / (3 * n) / T.size**k
                    res = _additive(inst, X2[j], T, budget, params.additive, timer, seed_offset=g + j + 1)
                    X3[j] = res.assignment
                    claimed[j] = res.cost
            with timer.phase("dense"):
                costs = inst.objective_batch(X3)
            for j, guess in enumerate(guesses):
                x1, x2, x3 = X1[j], X2[j], X3[j]
                C, T = parts[j]
                cost = Fraction(int(costs[j]), inst.eta)
                if j in claimed and claimed[j] != cost:
                    raise InvariantViolation("additive finish misreported its cost")
                rec = {"guess": g, "clear": int(C.size), "tricky": int(T.size), "cost": cost}
                if ref is not None:
                    rec["principal"] = bool(all(ref[u] == guess[u] for u in union))
                    rec["corrupt_x1"] = int((x1 != ref).sum())
                    rec["corrupt_x2"] = int((x2 != ref).sum())
                    rec["corrupt_clear"] = int((x2[C] != ref[C]).sum())
                records.append(rec)
                if best is None or cost < best[1]:
                    best = (x3, cost, g)
                g += 1

    x3, cost, g = best
    trace["guesses"] = records
    trace["chosen_guess"] = g
    return _report(inst, params, x3, cost, timer, trace)


def solve_fragile_detailed(inst: CspInstance, params: FragilePtasParams, guess_values: Sequence[int]):
    """One guess of the sampling branch, returning (x1, x2, C, T, samples).

    Used to inspect the principal branch directly."""
    rng = make_rng(params.seed)
    samples = draw_samples(rng, inst.n, inst.k, params.sample_count(inst.domain_size, inst.k))
    union = sorted({u for S in samples for u in S})
    guess = {u: int(guess_values[u]) for u in union}
    bhat = b_hat_numerators(inst, samples, guess)
    x1 = greedy_round(inst, mode="from-estimates", estimates=bhat)
    B1 = inst.b_matrix(x1)
    x2 = np.argmin(B1, axis=1).astype(np.int64)
    C, T = extract_clearcut(inst, x1, x2, params.delta, B1)
    return x1, x2, C, T, samples


def _report(inst, params, x, cost, timer, trace) -> SolveReport:
    x = np.asarray(x, dtype=np.int64)
    return SolveReport(
        solver="fragile",
        cost=cost,
        assignment=x,
        params=params.describe(),
        seed=params.seed,
        timing=timer.as_dict(),
        trace=trace,
        problem_cost=cost * inst.cost_unit,
    )

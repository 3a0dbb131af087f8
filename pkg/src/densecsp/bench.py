"""Seeded experiment grids emitting CSV.

Every CSV starts with a ``# config: {...}`` line holding the full resolved
configuration, so ``bench_*(json.loads(line))`` reproduces the cost columns.
Cells are independent and may run in a process pool; rows are always written
in grid order.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from typing import Any

import numpy as np

from densecsp.additive import AdditiveBackend
from densecsp.encodings.gb import gb_to_csp
from densecsp.encodings.hier import hier_to_rigid_csp
from densecsp.errors import CapExceededError, InvalidInputError
from densecsp.fragile import FragilePtasParams, solve_fragile
from densecsp.generators import gen_planted_gb, gen_planted_hier, planted_switches
from densecsp.oracle import exact_csp, exact_gb, exact_hier
from densecsp.report import PhaseTimer
from densecsp.rigid import RigidPtasParams, solve_hierarchical, solve_rigid
from densecsp.rng import keyed_rng

KINDS = ("gb", "cc", "hier")

RATIO_DEFAULTS: dict[str, Any] = {
    "kind": "gb",
    "sizes": [8],
    "noise": [0.05],
    "eps": ["1/5"],
    "samples": [4],
    "seeds": 10,
    "seed": 0,
    "additive": "exact",
    "additive_sample": None,
    "additive_cap": 2**20,
    "delta": None,  # gb: 1/2, cc: 1, hier: 1/M
    "clusters": 2,
    "levels": 1,
    "fallback": None,  # "planted" to use the planted cost when no oracle can run
    "oracle_cap": 2**24,
}

RATIO_COLUMNS = [
    "row", "kind", "size", "noise", "eps", "samples", "seed", "opt", "opt_source", "cost", "ratio",
    "within", "branch", "corrupt_x1", "corrupt_x2", "t_dense", "t_guess", "t_additive", "t_total",
    "runs", "frac_within", "q50", "q90", "max", "failures",
]

SCALING_DEFAULTS: dict[str, Any] = {
    "kind": "gb",
    "sizes": [100, 200, 400],
    "noise": 0.05,
    "eps": "1/5",
    "samples": 6,
    "seeds": 3,
    "seed": 0,
    "repeats": 40,
    "additive_sample": 2,
}

SCALING_COLUMNS = [
    "row", "size", "seed", "cost", "t_dense", "t_guess", "t_sample", "t_additive", "t_total",
    "dense_ratio", "guess_ratio", "exponent",
]


def resolve(config: dict | None, defaults: dict) -> dict:
    cfg = dict(defaults)
    for key, value in (config or {}).items():
        if key not in defaults:
            raise InvalidInputError(f"unknown bench config key {key!r}")
        cfg[key] = value
    return cfg


def ratio(cost: Fraction, opt: Fraction) -> float:
    if opt == 0:
        return 1.0 if cost == 0 else math.inf
    return float(Fraction(cost) / Fraction(opt))


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)
    if isinstance(x, float):
        return "inf" if math.isinf(x) else f"{x:.6g}"
    return "" if x is None else str(x)


def _to_csv(config: dict, columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: _fmt(r.get(c)) for c in columns})
    return buf.getvalue()


def run_seed(cfg: dict, cell: tuple, index: int) -> int:
    return int(keyed_rng(cfg["seed"], cfg["kind"], *[str(c) for c in cell], index).integers(2**31))


def _one_run(cfg: dict, size: int, noise: float, eps: Fraction, s: int, seed: int) -> dict:
    kind = cfg["kind"]
    backend = AdditiveBackend(cfg["additive"], int(cfg["additive_cap"]), cfg["additive_sample"], seed)
    timer = PhaseTimer()
    row: dict = {}
    start = time.perf_counter()
    if kind == "gb":
        gb, x, y = gen_planted_gb(size, noise, seed)
        inst = gb_to_csp(gb)
        ref = planted_switches(x, y)
        planted = Fraction(int((gb.bits ^ ref[:size, None] ^ ref[None, size:]).sum()))
        delta = Fraction(cfg["delta"] or Fraction(1, 2))
        rep = solve_fragile(inst, FragilePtasParams(eps, delta, s, seed=seed, additive=backend), ref, timer)
        try:
            opt, source = exact_gb(gb)[2], "exact_gb"
        except CapExceededError:
            opt, source = _fallback(cfg, planted, kind)
        principal = [g for g in rep.trace.get("guesses", []) if g.get("principal")]
        if principal:
            row["corrupt_x1"] = principal[0]["corrupt_x1"]
            row["corrupt_x2"] = principal[0]["corrupt_x2"]
        row["branch"] = rep.trace["branch"]
    elif kind in ("cc", "hier"):
        M = 1 if kind == "cc" else int(cfg["levels"])
        d = int(cfg["clusters"])
        ph = gen_planted_hier(size, M, d, noise, seed)
        delta = Fraction(cfg["delta"] or Fraction(1, M))
        params = RigidPtasParams(eps, delta, s, seed=seed, additive=backend)
        if kind == "cc":
            inst = hier_to_rigid_csp(ph.problem, ph.trunk)
            rep = solve_rigid(inst, params, ph.labels, timer)
            oracle = lambda: exact_csp(inst, cap=int(cfg["oracle_cap"]))[1]  # noqa: E731
            source = "exact_csp"
        else:
            rep = solve_hierarchical(ph.problem, params, timer=timer)
            oracle = lambda: exact_hier(ph.problem, cap=int(cfg["oracle_cap"]))[2]  # noqa: E731
            source = "exact_hier"
        try:
            opt = oracle()
        except CapExceededError:
            opt, source = _fallback(cfg, ph.planted_cost, kind)
        row["branch"] = "recursion"
    else:
        raise InvalidInputError(f"bench kind must be one of {KINDS}")
    total = time.perf_counter() - start
    r = ratio(rep.cost, opt)
    row.update(
        row="run", kind=kind, size=size, noise=noise, eps=eps, samples=s, seed=seed, opt=opt,
        opt_source=source, cost=rep.cost, ratio=r, within=int(r <= 1 + float(eps)),
        t_dense=timer.totals.get("dense", 0.0), t_guess=timer.totals.get("guess", 0.0),
        t_additive=timer.totals.get("additive", 0.0), t_total=total,
    )
    return row


def _fallback(cfg: dict, planted: Fraction, kind: str):
    if cfg["fallback"] == "planted":
        return planted, "planted"
    raise CapExceededError(f"no feasible oracle for this {kind} cell and no planted fallback configured")


def _cell_rows(args) -> list[dict]:
    cfg, cell = args
    size, noise, eps, s = cell
    runs = [_one_run(cfg, size, noise, Fraction(eps), s, run_seed(cfg, cell, i)) for i in range(int(cfg["seeds"]))]
    ratios = np.array([r["ratio"] for r in runs], dtype=float)
    finite = ratios[np.isfinite(ratios)]
    summary = {
        "row": "summary", "kind": cfg["kind"], "size": size, "noise": noise, "eps": Fraction(eps),
        "samples": s, "runs": len(runs), "frac_within": float(np.mean([r["within"] for r in runs])) if runs else None,
        "failures": int((~np.isfinite(ratios)).sum()),
        "q50": float(np.quantile(ratios, 0.5)) if runs else None,
        "q90": float(np.quantile(ratios, 0.9)) if runs else None,
        "max": float(ratios.max()) if runs else None,
    }
    if runs and finite.size < ratios.size:
        summary["max"] = math.inf
    return runs + [summary]


def bench_ratio(config: dict | None = None, threads: int = 1) -> str:
    cfg = resolve(config, RATIO_DEFAULTS)
    cfg["eps"] = [str(Fraction(e)) for e in cfg["eps"]]
    cells = list(itertools.product(cfg["sizes"], cfg["noise"], cfg["eps"], cfg["samples"]))
    jobs = [(cfg, cell) for cell in cells]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_cell_rows, jobs))
    else:
        results = [_cell_rows(j) for j in jobs]
    rows = [r for block in results for r in block]
    return _to_csv(cfg, RATIO_COLUMNS, rows)


_SCALING_PHASES = ("dense", "guess", "sample", "additive")


def _scaling_setup(cfg: dict, m: int, seed: int):
    gb, _, _ = gen_planted_gb(m, float(cfg["noise"]), seed)
    inst = gb_to_csp(gb)
    backend = AdditiveBackend("sampled", 2**20, int(cfg["additive_sample"]), seed)
    params = FragilePtasParams(
        Fraction(cfg["eps"]), Fraction(1, 2), int(cfg["samples"]), seed=seed, additive=backend, skip_prepass=True
    )
    rep = solve_fragile(inst, params)  # also warms lazy tables before timing
    return inst, params, rep.cost


def _timed_solve(inst, params) -> tuple[float, ...]:
    timer = PhaseTimer()
    start = time.perf_counter()
    solve_fragile(inst, params, timer=timer)
    total = time.perf_counter() - start
    return tuple(timer.totals.get(p, 0.0) for p in _SCALING_PHASES) + (total,)


def bench_scaling(config: dict | None = None, threads: int = 1) -> str:
    cfg = resolve(config, SCALING_DEFAULTS)
    if cfg["kind"] != "gb":
        raise InvalidInputError("scaling bench supports kind 'gb'")
    sizes = [int(m) for m in cfg["sizes"]]
    jobs = [(m, int(keyed_rng(cfg["seed"], "scaling", m, i).integers(2**31))) for m in sizes for i in range(int(cfg["seeds"]))]
    # serial timing, so workers never compete for cores; repeats go round-robin
    # over all runs so slow stretches of the machine hit every size alike
    setups = [_scaling_setup(cfg, m, seed) for m, seed in jobs]
    best: list[tuple | None] = [None] * len(jobs)
    for _ in range(int(cfg["repeats"])):
        for j, (inst, params, _) in enumerate(setups):
            times = _timed_solve(inst, params)
            best[j] = times if best[j] is None else tuple(map(min, best[j], times))
    rows = []
    for (m, seed), (_, _, cost), b in zip(jobs, setups, best):
        row = {"row": "run", "size": m, "seed": seed, "cost": cost}
        row.update(zip(("t_dense", "t_guess", "t_sample", "t_additive", "t_total"), b))
        rows.append(row)
    summaries = []
    for m in sizes:
        sub = [r for r in rows if r["size"] == m]
        # per-phase work does not depend on the seed, so the minimum over
        # seeds and repeats is the least disturbed measurement
        summary = {"row": "summary", "size": m}
        for col in ("t_dense", "t_guess", "t_sample", "t_additive", "t_total"):
            summary[col] = float(min(r[col] for r in sub))
        summaries.append(summary)
    for prev, cur in zip(summaries, summaries[1:]):
        cur["dense_ratio"] = cur["t_dense"] / prev["t_dense"] if prev["t_dense"] else math.inf
        cur["guess_ratio"] = cur["t_guess"] / prev["t_guess"] if prev["t_guess"] else math.inf
    if len(summaries) >= 2:
        logs = np.log([s["size"] for s in summaries]), np.log([max(s["t_dense"], 1e-12) for s in summaries])
        slope = float(np.polyfit(logs[0], logs[1], 1)[0])
        summaries.append({"row": "fit", "exponent": slope})
    return _to_csv(cfg, SCALING_COLUMNS, rows + summaries)


def read_csv(text: str) -> tuple[dict, list[dict]]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# config: "):
        raise InvalidInputError("bench CSV must start with a '# config:' line")
    cfg = json.loads(lines[0][len("# config: "):])
    return cfg, list(csv.DictReader(lines[1:]))

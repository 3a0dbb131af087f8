"""Solver reports and phase timing."""

from __future__ import annotations

import json
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterator

import numpy as np

PHASES = ("dense", "sample", "guess", "additive", "other")


class PhaseTimer:
    """Exclusive wall-clock buckets: entering a phase pauses the enclosing one."""

    def __init__(self) -> None:
        self.totals: dict[str, float] = defaultdict(float)
        self.calls: dict[str, int] = defaultdict(int)
        self._stack: list[list] = []

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        now = time.perf_counter()
        if self._stack:
            outer = self._stack[-1]
            self.totals[outer[0]] += now - outer[1]
        self._stack.append([name, now])
        self.calls[name] += 1
        try:
            yield
        finally:
            end = time.perf_counter()
            current = self._stack.pop()
            self.totals[name] += end - current[1]
            if self._stack:
                self._stack[-1][1] = end

    def as_dict(self) -> dict[str, float]:
        return {k: round(v, 6) for k, v in sorted(self.totals.items())}


def frac_str(x: Fraction) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def parse_frac(s: str | int | float) -> Fraction:
    return Fraction(s)


def jsonable(obj: Any) -> Any:
    if isinstance(obj, Fraction):
        return frac_str(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [jsonable(v) for v in items]
    return obj


@dataclass
class SolveReport:
    solver: str
    cost: Fraction
    assignment: np.ndarray
    params: dict = field(default_factory=dict)
    seed: int | None = None
    timing: dict = field(default_factory=dict)
    trace: dict = field(default_factory=dict)
    problem_cost: Fraction | None = None

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "solver": self.solver,
            "cost": frac_str(self.cost),
            "cost_float": float(self.cost),
            "assignment": [int(a) for a in self.assignment],
            "params": jsonable(self.params),
            "seed": self.seed,
            "trace": jsonable(self.trace),
        }
        if self.problem_cost is not None:
            d["problem_cost"] = frac_str(self.problem_cost)
        if timing:
            d["timing"] = jsonable(self.timing)
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True)

    def canonical(self) -> str:
        """Serialization used for determinism checks: everything but timing."""
        return self.to_json(timing=False)

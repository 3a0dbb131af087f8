"""Randomized approximation schemes for dense fragile and rigid MIN-CSPs."""

from densecsp.core import (
    CspBuilder,
    CspInstance,
    TableCsp,
    b_value,
    count_fragile_constraints,
    objective,
    problem_cost,
    rewrite,
    verify_fragile_dense,
)

__version__ = "0.1.0"

__all__ = [
    "CspBuilder",
    "CspInstance",
    "TableCsp",
    "b_value",
    "count_fragile_constraints",
    "objective",
    "problem_cost",
    "rewrite",
    "verify_fragile_dense",
]

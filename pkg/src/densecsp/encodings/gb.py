"""Gale-Berlekamp switching game.

Board entries are stored bit-packed with the mapping +1 -> 0, -1 -> 1 (a lit
bulb).  Switch variables are row switches 0..m-1 followed by column switches
m..2m-1; value 0 leaves a line alone, value 1 flips it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from densecsp.core import CspInstance, LogicalConstraint, TableCsp
from densecsp.errors import InvalidInputError


@dataclass(frozen=True)
class GbInstance:
    m: int
    packed: bytes

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> "GbInstance":
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.ndim != 2 or bits.shape[0] != bits.shape[1] or bits.shape[0] < 1:
            raise InvalidInputError("board must be a non-empty square matrix")
        if ((bits != 0) & (bits != 1)).any():
            raise InvalidInputError("board bits must be 0 or 1")
        return cls(bits.shape[0], np.packbits(bits.reshape(-1)).tobytes())

    @classmethod
    def from_signs(cls, M: np.ndarray) -> "GbInstance":
        M = np.asarray(M)
        if not np.isin(M, (-1, 1)).all():
            raise InvalidInputError("board entries must be +1 or -1")
        return cls.from_bits((M < 0).astype(np.uint8))

    @cached_property
    def bits(self) -> np.ndarray:
        flat = np.unpackbits(np.frombuffer(self.packed, dtype=np.uint8), count=self.m * self.m)
        out = flat.reshape(self.m, self.m).astype(np.int64)
        out.setflags(write=False)
        return out

    @property
    def signs(self) -> np.ndarray:
        return 1 - 2 * self.bits

    def lit(self, rows: Sequence[int], cols: Sequence[int]) -> int:
        """Lit bulbs after flipping the given row and column switches (0/1)."""
        r = np.asarray(rows, dtype=np.int64)
        c = np.asarray(cols, dtype=np.int64)
        return int((self.bits ^ r[:, None] ^ c[None, :]).sum())


_CHUNK_BYTES = 1 << 20


class GbCsp(CspInstance):
    """Implicit MIN-2CSP view of a board: the table over (row r, column c) is
    ``[bit ^ a ^ b]`` and is never materialized."""

    explicit = False

    def __init__(self, gb: GbInstance) -> None:
        self.gb = gb
        self.m = gb.m
        self.n, self.k, self.domain_size, self.eta = 2 * gb.m, 2, 2, 1
        self._check()
        self._bits = np.ascontiguousarray(gb.bits, dtype=np.uint8)
        self._bitsT = np.ascontiguousarray(self._bits.T)
        self._tables: TableCsp | None = None

    @property
    def n_tables(self) -> int:
        return self.m * self.m

    def _lit_counts(self, tableT: np.ndarray, switches: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """``out[b, i] = sum_j table[i, j] ^ switches[b, j]``, given the table
        transposed.  The sum runs over the leading axis, so each step adds whole
        contiguous (batch, m) slabs and the cost per constraint stays flat in m."""
        B, m = switches.shape[0], tableT.shape[1]
        acc = np.uint16 if tableT.shape[0] < 2**16 else np.uint32
        sT = np.ascontiguousarray(switches.T)
        if out is None:
            out = np.empty((B, m), dtype=np.int64)
        step = max(1, _CHUNK_BYTES // tableT.size)
        for lo in range(0, B, step):
            blk = sT[:, lo : lo + step, None] ^ tableT[:, None, :]
            out[lo : lo + step] = np.add.reduce(blk, axis=0, dtype=acc)
        return out

    def _row_zero(self, c: np.ndarray) -> np.ndarray:
        """Lit count of each row with its own switch at 0, given column switches."""
        return self._lit_counts(self._bitsT, c)

    def _col_zero(self, r: np.ndarray) -> np.ndarray:
        return self._lit_counts(self._bits, r)

    def _split(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X).astype(np.uint8)
        return np.ascontiguousarray(X[:, : self.m]), np.ascontiguousarray(X[:, self.m :])

    def objective_batch(self, X: np.ndarray) -> np.ndarray:
        r, c = self._split(X)
        rows = self._row_zero(c)
        # a flipped row lights m - rows
        return rows.sum(axis=1) + np.einsum("ij,ij->i", r, self.m - 2 * rows)

    def b_matrix_batch(self, X: np.ndarray) -> np.ndarray:
        r, c = self._split(X)
        m = self.m
        B = np.empty((X.shape[0], 2 * m, 2), dtype=np.int64)
        self._lit_counts(self._bitsT, c, B[:, :m, 0])
        self._lit_counts(self._bits, r, B[:, m:, 0])
        np.subtract(m, B[:, :, 0], out=B[:, :, 1])
        return B

    def unit_rows(self, S: tuple[int, ...], values: Sequence[int]) -> np.ndarray:
        if len(S) != 1:
            raise InvalidInputError("sample subsets must have size k-1=1")
        (w,), (a,) = S, values
        out = np.zeros((self.n, 2), dtype=np.int64)
        if w < self.m:
            line = self._bits[w] ^ int(a)
            out[self.m :, 0], out[self.m :, 1] = line, 1 - line
        else:
            line = self._bits[:, w - self.m] ^ int(a)
            out[: self.m, 0], out[: self.m, 1] = line, 1 - line
        return out

    def penalty(self, I: Sequence[int], values: Sequence[int]) -> int:
        (u, a), (v, b) = sorted(zip(I, values))
        if u < self.m <= v:
            return int(self._bits[u, v - self.m] ^ a ^ b)
        return 0

    def to_tables(self) -> TableCsp:
        if self._tables is None:
            m = self.m
            r, c = np.divmod(np.arange(m * m), m)
            vars = np.stack([r, m + c], axis=1)
            bit = self._bits.reshape(-1)
            nums = np.stack([bit, 1 - bit, 1 - bit, bit], axis=1)
            constraints = [LogicalConstraint(t, 1, True) for t in range(m * m)]
            self._tables = TableCsp(2 * m, 2, 2, 1, vars, nums, constraints)
        return self._tables


def gb_to_csp(gb: GbInstance, explicit: bool = False) -> CspInstance:
    """MIN-2CSP whose objective is the lit-bulb count of a switch setting."""
    inst = GbCsp(gb)
    return inst.to_tables() if explicit else inst


def split_switches(x: Sequence[int], m: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.int64)
    return x[:m], x[m:]


def gb_equivalences(gb: GbInstance, x_rows: Sequence[int], y_cols: Sequence[int]) -> tuple[int, int, int]:
    """Evaluate the equivalent formulations at sign vectors x, y.

    Returns ``(d(M, x y^T), xor mismatch count, x^T M y)``.
    """
    x = np.asarray(x_rows, dtype=np.int64)
    y = np.asarray(y_cols, dtype=np.int64)
    if x.shape != (gb.m,) or y.shape != (gb.m,):
        raise InvalidInputError(f"sign vectors must have length {gb.m}")
    if not (np.isin(x, (-1, 1)).all() and np.isin(y, (-1, 1)).all()):
        raise InvalidInputError("sign vectors must have entries +1 or -1")
    M = gb.signs
    d_rank1 = int((M != np.outer(x, y)).sum())
    xb, yb = (x < 0).astype(np.int64), (y < 0).astype(np.int64)
    xor_count = int((gb.bits != (xb[:, None] ^ yb[None, :])).sum())
    bilinear = int(x @ M @ y)
    return d_rank1, xor_count, bilinear


def parse_gb(text: str) -> GbInstance:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    try:
        m = int(lines[0])
    except (IndexError, ValueError) as exc:
        raise InvalidInputError("GB file must start with the side length m") from exc
    rows = lines[1:]
    if len(rows) != m or any(len(r) != m or set(r) - {"+", "-"} for r in rows):
        raise InvalidInputError(f"GB file needs {m} rows of {m} characters from '+-'")
    bits = np.array([[ch == "-" for ch in r] for r in rows], dtype=np.uint8)
    return GbInstance.from_bits(bits)


def format_gb(gb: GbInstance) -> str:
    body = "\n".join("".join("-" if b else "+" for b in row) for row in gb.bits.tolist())
    return f"{gb.m}\n{body}\n"


def load_gb(path: str | Path) -> GbInstance:
    return parse_gb(Path(path).read_text())

"""Conic program container.

A program in LMI form::

    minimize / maximize   c'x
    subject to            A x = b
                          F_k(x) = F_k0 + sum_j x_j F_kj  in K_k   (each block k)

where ``K_k`` is the PSD cone (``kind="psd"``, matrices) or the nonnegative
orthant (``kind="lp"``, vectors). A block only stores the variables that
actually appear in it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ProgramError(ValueError):
    pass


@dataclass
class Block:
    kind: str
    size: int
    vars: np.ndarray
    coefs: np.ndarray
    const: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.vars = np.asarray(self.vars, dtype=np.int64)
        self.coefs = np.asarray(self.coefs, dtype=float)
        self.const = np.asarray(self.const, dtype=float)
        m = self.size
        if self.kind == "psd":
            if self.coefs.shape != (len(self.vars), m, m) or self.const.shape != (m, m):
                raise ProgramError(f"block {self.label!r}: bad PSD data shapes")
            if not np.array_equal(self.coefs, self.coefs.transpose(0, 2, 1)):
                raise ProgramError(f"block {self.label!r}: coefficient matrices not symmetric")
            if not np.array_equal(self.const, self.const.T):
                raise ProgramError(f"block {self.label!r}: constant matrix not symmetric")
        elif self.kind == "lp":
            if self.coefs.shape != (len(self.vars), m) or self.const.shape != (m,):
                raise ProgramError(f"block {self.label!r}: bad LP data shapes")
        else:
            raise ProgramError(f"unknown block kind {self.kind!r}")
        if len(np.unique(self.vars)) != len(self.vars):
            raise ProgramError(f"block {self.label!r}: repeated variable index")

    def value(self, x: np.ndarray) -> np.ndarray:
        """``F_k(x)``."""
        if self.kind == "psd":
            return self.const + np.einsum("j,jab->ab", x[self.vars], self.coefs)
        return self.const + x[self.vars] @ self.coefs

    def adjoint(self, z: np.ndarray, nvars: int) -> np.ndarray:
        """``(<F_kj, z>)_j`` scattered into a length-``nvars`` vector."""
        out = np.zeros(nvars)
        if self.kind == "psd":
            out[self.vars] = np.einsum("jab,ab->j", self.coefs, z)
        else:
            out[self.vars] = self.coefs @ z
        return out

    def pair_const(self, z: np.ndarray) -> float:
        return float(np.sum(self.const * z))


@dataclass
class ConicProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    blocks: list[Block]
    sense: str = "min"
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = len(self.c)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float)
        if self.sense not in ("min", "max"):
            raise ProgramError(f"sense must be 'min' or 'max', got {self.sense!r}")
        if len(self.b) != self.A.shape[0]:
            raise ProgramError("equality rows and right-hand side differ in length")
        for i, row in enumerate(self.A):
            if not np.any(row):
                raise ProgramError(f"equality row {i} has no nonzero coefficient")
        for blk in self.blocks:
            if len(blk.vars) and (blk.vars.min() < 0 or blk.vars.max() >= n):
                raise ProgramError(f"block {blk.label!r} references a missing variable")

    @property
    def nvars(self) -> int:
        return len(self.c)

    @property
    def nrows(self) -> int:
        return self.A.shape[0]

    def cone_degree(self) -> int:
        return sum(blk.size for blk in self.blocks)

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)

    def with_sense(self, sense: str) -> ConicProgram:
        return ConicProgram(self.c, self.A, self.b, self.blocks, sense, dict(self.labels))

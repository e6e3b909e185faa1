"""Isometric vectorisation of symmetric matrices.

``svec`` stacks the lower triangle column by column and scales off-diagonal
entries by sqrt(2), so ``<M, N>_F == svec(M) @ svec(N)``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

_SQRT2 = np.sqrt(2.0)


@lru_cache(maxsize=None)
def _layout(m: int):
    cols, rows = np.triu_indices(m)
    weight = np.where(rows == cols, 1.0, _SQRT2)
    return rows, cols, weight


def svec(M: np.ndarray, check: bool = True) -> np.ndarray:
    """Works on a single ``(m, m)`` matrix or a stack ``(..., m, m)``."""
    M = np.asarray(M, dtype=float)
    m = M.shape[-1]
    if M.shape[-2] != m:
        raise ValueError("svec needs square matrices")
    if check and not np.allclose(M, np.swapaxes(M, -1, -2), rtol=0, atol=1e-12 * (1 + np.abs(M).max(initial=0))):
        raise ValueError("svec needs symmetric matrices")
    rows, cols, weight = _layout(m)
    return M[..., rows, cols] * weight


def smat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    k = v.shape[-1]
    m = int(round((np.sqrt(8 * k + 1) - 1) / 2))
    if m * (m + 1) // 2 != k:
        raise ValueError(f"length {k} is not a triangular number")
    rows, cols, weight = _layout(m)
    out = np.zeros(v.shape[:-1] + (m, m))
    vals = v / weight
    out[..., rows, cols] = vals
    out[..., cols, rows] = vals
    return out

"""Sparse SDPA (``.dat-s``) reader and writer.

SDPA describes

    minimize c'x   s.t.   sum_j x_j F_j - F_0  psd

with block-diagonal ``F``; negative block sizes denote diagonal (LP) blocks.
On export, equality rows ``A x = b`` become one diagonal block holding
``A x - b >= 0`` and ``b - A x >= 0``, and maximisation is written as
minimisation of ``-c'x``. Entries are emitted in a fixed order, so the same
program always produces the same bytes.
"""

from __future__ import annotations

import io
import os
import re

import numpy as np

from .program import Block, ConicProgram, ProgramError


class SdpaError(ValueError):
    pass


def _fmt(v: float) -> str:
    return repr(float(v))


def write_sdpa(program: ConicProgram, target, comment: str | None = None) -> None:
    """Write ``program`` to a path or text stream."""
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="ascii") as fh:
            write_sdpa(program, fh, comment)
        return
    out = target
    N = program.nvars
    c = program.c if program.sense == "min" else -program.c
    sizes = [blk.size if blk.kind == "psd" else -blk.size for blk in program.blocks]
    has_eq = program.nrows > 0
    if has_eq:
        sizes.append(-2 * program.nrows)
    if comment:
        for line in comment.splitlines():
            out.write(f'"{line}\n')
    out.write(f"{N}\n{len(sizes)}\n")
    out.write(" ".join(str(s) for s in sizes) + "\n")
    out.write(" ".join(_fmt(v) for v in c) + "\n")

    # (mat, block, i, j, value); F_0 is written negated
    entries: list[tuple[int, int, int, int, float]] = []
    for k, blk in enumerate(program.blocks, start=1):
        if blk.kind == "psd":
            rows, cols = np.triu_indices(blk.size)
            for i, j in zip(rows, cols):
                if blk.const[i, j] != 0:
                    entries.append((0, k, i + 1, j + 1, -blk.const[i, j]))
            for jv, mat in zip(blk.vars, blk.coefs):
                for i, j in zip(rows, cols):
                    if mat[i, j] != 0:
                        entries.append((int(jv) + 1, k, i + 1, j + 1, mat[i, j]))
        else:
            for i in range(blk.size):
                if blk.const[i] != 0:
                    entries.append((0, k, i + 1, i + 1, -blk.const[i]))
            for jv, vec in zip(blk.vars, blk.coefs):
                for i in range(blk.size):
                    if vec[i] != 0:
                        entries.append((int(jv) + 1, k, i + 1, i + 1, vec[i]))
    if has_eq:
        k = len(sizes)
        p = program.nrows
        for i in range(p):
            if program.b[i] != 0:
                entries.append((0, k, i + 1, i + 1, program.b[i]))
                entries.append((0, k, p + i + 1, p + i + 1, -program.b[i]))
        for j in range(N):
            for i in np.flatnonzero(program.A[:, j]):
                entries.append((j + 1, k, i + 1, i + 1, program.A[i, j]))
                entries.append((j + 1, k, p + i + 1, p + i + 1, -program.A[i, j]))
    entries.sort(key=lambda e: e[:4])
    for mat, k, i, j, v in entries:
        out.write(f"{mat} {k} {i} {j} {_fmt(v)}\n")


def dumps_sdpa(program: ConicProgram, comment: str | None = None) -> str:
    buf = io.StringIO()
    write_sdpa(program, buf, comment)
    return buf.getvalue()


_SEP = re.compile(r"[,(){}\s]+")


def _numbers(line: str) -> list[str]:
    return [t for t in _SEP.split(line) if t]


def read_sdpa(source) -> ConicProgram:
    """Parse a sparse SDPA file (path or text stream) into a min-sense program.

    Every block, including diagonal ones, becomes a cone block; the returned
    program has no separate equality rows.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="ascii") as fh:
            return read_sdpa(fh)
    lines = []
    for raw in source:
        s = raw.strip()
        if s and s[0] not in '"*':
            lines.append(s)
    if len(lines) < 4:
        raise SdpaError("truncated SDPA header")
    try:
        N = int(_numbers(lines[0])[0])
        nblocks = int(_numbers(lines[1])[0])
        sizes = [int(t) for t in _numbers(lines[2])[:nblocks]]
        c = np.array([float(t) for t in _numbers(lines[3])[:N]])
    except (ValueError, IndexError) as exc:
        raise SdpaError(f"malformed SDPA header: {exc}") from None
    if len(sizes) != nblocks or len(c) != N:
        raise SdpaError("header counts do not match")

    consts = [np.zeros((abs(s), abs(s))) if s > 0 else np.zeros(-s) for s in sizes]
    coefs: list[dict[int, np.ndarray]] = [{} for _ in sizes]
    for lineno, line in enumerate(lines[4:], start=5):
        toks = _numbers(line)
        if len(toks) != 5:
            raise SdpaError(f"line {lineno}: expected 5 fields, got {len(toks)}")
        try:
            mat, k, i, j = (int(t) for t in toks[:4])
            v = float(toks[4])
        except ValueError:
            raise SdpaError(f"line {lineno}: bad entry {line!r}") from None
        if not (0 <= mat <= N and 1 <= k <= nblocks):
            raise SdpaError(f"line {lineno}: matrix or block index out of range")
        s = sizes[k - 1]
        m = abs(s)
        if not (1 <= i <= m and 1 <= j <= m) or (s < 0 and i != j):
            raise SdpaError(f"line {lineno}: entry ({i}, {j}) outside block {k}")
        if mat == 0:
            target = consts[k - 1]
            v = -v
        else:
            target = coefs[k - 1].setdefault(mat - 1, np.zeros_like(consts[k - 1]))
        if s > 0:
            target[i - 1, j - 1] = v
            target[j - 1, i - 1] = v
        else:
            target[i - 1] = v

    blocks = []
    for k, s in enumerate(sizes):
        vars_ = sorted(coefs[k])
        stack = np.array([coefs[k][j] for j in vars_]) if vars_ else np.zeros((0,) + consts[k].shape)
        try:
            blocks.append(Block("psd" if s > 0 else "lp", abs(s), np.array(vars_, dtype=np.int64),
                                stack, consts[k], f"block{k + 1}"))
        except ProgramError as exc:
            raise SdpaError(str(exc)) from None
    return ConicProgram(c, np.zeros((0, N)), np.zeros(0), blocks, "min")

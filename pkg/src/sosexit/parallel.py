"""Worker-count policy shared by the solver front end and the Monte Carlo oracle."""

from __future__ import annotations

import os

ENV_VAR = "SOSEXIT_THREADS"


def thread_limit(requested: int | None = None) -> int:
    """``requested`` if given, else ``$SOSEXIT_THREADS``, else 1."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(ENV_VAR, "").strip()
    if not env:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        raise ValueError(f"{ENV_VAR} must be an integer, got {env!r}") from None

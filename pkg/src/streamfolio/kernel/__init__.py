"""Deterministic finite-domain CP kernel with node-count cost.

Two interchangeable search backends produce identical outcomes: the
compiled ``_csearch`` extension (used when importable) and the pure-Python
``_pysearch`` fallback. ``STREAMFOLIO_KERNEL=python`` forces the fallback.
"""
from __future__ import annotations

import logging
import os
import time

from . import _pysearch
from .csp import (
    EXACTLY_ONE,
    LIN_EQ,
    LIN_LE,
    REIF_EQ,
    Csp,
    FlatCsp,
    MalformedCsp,
    SolveBudget,
    SolveOutcome,
    Status,
)

__all__ = [
    "Csp",
    "FlatCsp",
    "MalformedCsp",
    "SolveBudget",
    "SolveOutcome",
    "Status",
    "solve",
    "BACKEND",
    "available_backends",
    "LIN_LE",
    "LIN_EQ",
    "REIF_EQ",
    "EXACTLY_ONE",
]

log = logging.getLogger(__name__)

try:
    from . import _csearch
except ImportError:  # pragma: no cover - depends on the build
    _csearch = None

_BACKENDS = {"python": _pysearch.search}
if _csearch is not None:
    _BACKENDS["cython"] = _csearch.search

_forced = os.environ.get("STREAMFOLIO_KERNEL", "").strip().lower()
if _forced and _forced not in _BACKENDS:
    log.warning("kernel backend %r unavailable, using %s", _forced, "cython" if _csearch else "python")
    _forced = ""
BACKEND = _forced or ("cython" if _csearch is not None else "python")

_STATUS = {0: Status.SAT, 1: Status.UNSAT, 2: Status.CAPPED}


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def solve(
    csp: Csp | FlatCsp,
    budget: SolveBudget,
    *,
    all_solutions: bool = False,
    trace: list | None = None,
    backend: str | None = None,
) -> SolveOutcome:
    """Depth-first search with propagation; cost is the number of nodes.

    ``trace`` (a list) receives one ``(node, depth, var, value, branch, ok)``
    tuple per node and always runs on the Python backend.
    """
    flat = csp.freeze() if isinstance(csp, Csp) else csp
    name = backend or BACKEND
    if trace is not None:
        name = "python"
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}")
    t0 = time.perf_counter()
    if name == "python":
        status, nodes, sol, depth, sols = _pysearch.search(
            flat, budget.node_cap, all_solutions, budget.wall_clock_cap, trace
        )
    else:
        status, nodes, sol, depth, sols = _BACKENDS[name](
            flat, budget.node_cap, all_solutions, budget.wall_clock_cap
        )
    return SolveOutcome(
        status=_STATUS[status],
        cost=nodes,
        solution=sol,
        wall_time=time.perf_counter() - t0,
        max_depth=depth,
        solutions=tuple(sols or ()) if all_solutions else None,
    )

"""Synthetic reward landscapes expressed as cost tables."""
from __future__ import annotations

import hashlib
import random

from streamfolio.kernel import Status
from streamfolio.racing import SyntheticEvaluator
from streamfolio.streamliners import StreamlinerSet, conflicts

BASE = 1000


def training_ids(n: int = 10) -> list[str]:
    return [f"t{j:02d}" for j in range(n)]


def _unit(*parts) -> float:
    h = hashlib.sha256("/".join(map(str, parts)).encode()).digest()
    return int.from_bytes(h[:8], "big") / 2**64


def vector_table(vector_of, ids):
    """Costs realising ``vector_of(set) -> (applicability, reduction)``.

    The first ``applicability * n`` instances are SAT at a uniform reduced
    cost; the rest are refuted at cost 1.
    """

    def table(ss_key, recipe, inst):
        app, red = vector_of(StreamlinerSet.parse(ss_key))
        n_sat = round(app * len(ids))
        if ids.index(inst) < n_sat:
            return Status.SAT, max(1, round((1 - red) * BASE))
        return Status.UNSAT, 1

    return SyntheticEvaluator(table)


def designated_landscape(candidates, seed):
    """One compatible pair earns (1.0, 0.6); everything else at most (0.9, 0.3)."""
    rng = random.Random(seed)
    ids = [s.id for s in candidates]
    by_id = {s.id: s for s in candidates}
    while True:
        x, y = sorted(rng.sample(ids, 2))
        if not conflicts(by_id[x], by_id[y]):
            break

    def vector_of(ss):
        m = set(ss.members)
        if m == {x, y}:
            return (1.0, 0.6)
        if x in m or y in m:
            return (0.9, 0.3)
        return (0.2 + 0.6 * _unit(seed, ss.key, "a"), 0.25 * _unit(seed, ss.key, "r"))

    return (x, y), vector_of


def two_niche_costs(candidates, n_per_niche=5):
    """Niche A is served by streamliner ``a``, niche B by ``b``.

    ``a`` solves everything, cheaply on A and moderately on B; ``b`` is
    refuted on A and a little faster than ``a`` on B. Everything else is
    refuted everywhere, so the only useful sets are {a} and {b}.
    """
    a, b = candidates[0].id, candidates[1].id
    ids = [f"A{j}" for j in range(n_per_niche)] + [f"B{j}" for j in range(n_per_niche)]

    def table(ss_key, recipe, inst):
        m = set(StreamlinerSet.parse(ss_key).members)
        if m == {a}:
            return Status.SAT, (100 if inst.startswith("A") else 500)
        if m == {b}:
            return (Status.UNSAT, 5) if inst.startswith("A") else (Status.SAT, 400)
        return Status.UNSAT, 5

    return (a, b), ids, {i: BASE for i in ids}, SyntheticEvaluator(table)

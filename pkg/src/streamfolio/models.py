"""Ranked model recipes and compilation of (instance, streamliners, recipe) to a CSP.

Every recipe exposes two views of ``curr``: an integer view ``X[c]`` (the
period of course c) and a boolean view ``B[c][p]`` (course c sits in period
p). Which of them are decision variables, how they are linked, and which
view each streamliner is posted on is what distinguishes the recipes.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Sequence

from .bacp import BacpInstance, BacpSolution
from .kernel import Csp
from .streamliners import (
    Constant,
    Extremal,
    Monotone,
    RangeCount,
    Streamliner,
    StreamlinerSet,
    ValueCount,
    generate_candidates,
    streamliner_semantics,
)

__all__ = [
    "Representation",
    "Side",
    "ModelRecipe",
    "RANKED_HEURISTICS",
    "RECIPES",
    "portfolio",
    "CompiledModel",
    "compile_model",
    "default_candidates",
]


class Representation(str, Enum):
    INT_ARRAY = "IntArray"
    BOOL_MATRIX = "BoolMatrix"
    MARKER_RELATION = "MarkerRelation"
    FLAG_RELATION = "FlagRelation"


class Side(str, Enum):
    PRIMARY = "primary"
    CHANNELLED_BEST = "channelled-best"


@dataclass(frozen=True)
class ModelRecipe:
    name: str
    rank: int
    primary: Representation
    channelling: bool
    side: Side

    def __post_init__(self) -> None:
        if not self.channelling and self.side is not Side.PRIMARY:
            raise ValueError("an unchannelled recipe can only post on its primary representation")

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "rank": self.rank,
            "primary": self.primary.value,
            "channelling": self.channelling,
            "constraint_side": self.side.value,
        }


RANKED_HEURISTICS: tuple[ModelRecipe, ...] = (
    ModelRecipe("compact", 1, Representation.INT_ARRAY, False, Side.PRIMARY),
    ModelRecipe("compact-channelled", 2, Representation.INT_ARRAY, True, Side.PRIMARY),
    ModelRecipe("compact-channelled-best", 3, Representation.INT_ARRAY, True, Side.CHANNELLED_BEST),
    ModelRecipe("explicit-bool", 4, Representation.BOOL_MATRIX, False, Side.PRIMARY),
    ModelRecipe("explicit-bool-channelled", 5, Representation.BOOL_MATRIX, True, Side.CHANNELLED_BEST),
    ModelRecipe("marker-relation", 6, Representation.MARKER_RELATION, False, Side.PRIMARY),
    ModelRecipe("flag-relation", 7, Representation.FLAG_RELATION, False, Side.PRIMARY),
    ModelRecipe("marker-relation-channelled", 8, Representation.MARKER_RELATION, True, Side.CHANNELLED_BEST),
)
RECIPES = {r.name: r for r in RANKED_HEURISTICS}
DEFAULT_RECIPE = RANKED_HEURISTICS[0]


def portfolio(n: int) -> list[ModelRecipe]:
    """The ``n`` most promising recipes, rank order."""
    if not 1 <= n <= len(RANKED_HEURISTICS):
        raise ValueError(f"portfolio size must be in 1..{len(RANKED_HEURISTICS)}, got {n}")
    return list(RANKED_HEURISTICS[:n])


@lru_cache(maxsize=None)
def default_candidates() -> tuple[Streamliner, ...]:
    return tuple(generate_candidates())


@dataclass
class CompiledModel:
    csp: Csp
    instance_id: str
    streamliner_key: str
    heuristic: str
    int_view: tuple[int, ...]
    bool_view: tuple[tuple[int, ...], ...]

    @property
    def provenance(self) -> tuple[str, str, str]:
        return self.instance_id, self.streamliner_key, self.heuristic

    def decode(self, values: Sequence[int]) -> BacpSolution:
        return BacpSolution(tuple(values[x] for x in self.int_view))

    def listing(self) -> list[str]:
        head = f"# {self.instance_id} streamliners={self.streamliner_key} recipe={self.heuristic}"
        return [head] + self.csp.listing()


class _Builder:
    def __init__(self, inst: BacpInstance, recipe: ModelRecipe):
        self.inst = inst
        self.recipe = recipe
        self.csp = Csp()
        self.C = inst.n_courses
        self.P = inst.n_periods
        self.X: list[int] = []
        self.B: list[list[int]] = []
        self._false: int | None = None
        self._occ: list[int] | None = None

    # representations -------------------------------------------------
    def int_array(self, decision: bool) -> list[int]:
        return [self.csp.int_var(1, self.P, f"x[{c}]", decision) for c in self.inst.courses]

    def bool_matrix(self, decision: bool, exactly_one: bool) -> list[list[int]]:
        rows = []
        for c in self.inst.courses:
            row = [self.csp.bool_var(f"b[{c},{p}]", decision) for p in self.inst.periods]
            if exactly_one:
                self.csp.exactly_one(row, f"row[{c}]")
            rows.append(row)
        return rows

    def link_reified(self, X: list[int], B: list[list[int]], label: str) -> None:
        for c in range(self.C):
            self.csp.channel(B[c], X[c], list(self.inst.periods), label)

    def relation(self, marker: bool) -> list[int]:
        """Pair-list encoding of the function graph; returns derived period ints."""
        csp, C, P = self.csp, self.C, self.P
        rc = [csp.int_var(1, C, f"rel.course[{j}]", True) for j in range(1, C + 1)]
        rp = [csp.int_var(1, P, f"rel.period[{j}]", True) for j in range(1, C + 1)]
        if marker:
            m = csp.int_var(0, C, "rel.marker", True)
            active = [csp.bool_var(f"rel.active[{j}]") for j in range(1, C + 1)]
            csp.linear([(1, a) for a in active] + [(-1, m)], "==", 0, "marker")
        else:
            active = [csp.bool_var(f"rel.flag[{j}]", True) for j in range(1, C + 1)]
        for j in range(C - 1):
            csp.linear([(1, active[j + 1]), (-1, active[j])], "<=", 0, "active-prefix")
        for j in range(C):
            csp.linear([(1, rc[j]), (-(C - 1), active[j])], "<=", 1, "inactive-default")
            csp.linear([(1, rp[j]), (-(P - 1), active[j])], "<=", 1, "inactive-default")
        for j in range(C - 1):
            csp.linear([(1, rc[j]), (-1, rc[j + 1]), (C, active[j + 1])], "<=", C - 1, "slot-order")
        holds = [[0] * C for _ in range(C)]
        for j in range(C):
            for c in range(C):
                u = csp.bool_var(f"rel.is[{j + 1},{c + 1}]")
                csp.reified_eq(u, rc[j], c + 1, "slot-course")
                w = csp.bool_var(f"rel.holds[{j + 1},{c + 1}]")
                csp.linear([(1, w), (-1, active[j])], "<=", 0, "holds")
                csp.linear([(1, w), (-1, u)], "<=", 0, "holds")
                csp.linear([(1, w), (-1, active[j]), (-1, u)], ">=", -1, "holds")
                holds[j][c] = w
        for c in range(C):
            csp.linear([(1, holds[j][c]) for j in range(C)], "==", 1, f"total-functional[{c + 1}]")
        Y = [csp.int_var(1, P, f"y[{c + 1}]") for c in range(C)]
        for c in range(C):
            for j in range(C):
                w = holds[j][c]
                csp.linear([(1, Y[c]), (-1, rp[j]), (P, w)], "<=", P, "period-of")
                csp.linear([(1, rp[j]), (-1, Y[c]), (P, w)], "<=", P, "period-of")
        return Y

    def build_views(self) -> None:
        r = self.recipe
        if r.primary is Representation.INT_ARRAY:
            self.X = self.int_array(decision=True)
            self.B = self.bool_matrix(decision=False, exactly_one=r.channelling)
            self.link_reified(self.X, self.B, "channel" if r.channelling else "occurs")
        elif r.primary is Representation.BOOL_MATRIX:
            self.B = self.bool_matrix(decision=True, exactly_one=True)
            if r.channelling:
                self.X = self.int_array(decision=False)
                self.link_reified(self.X, self.B, "channel")
            else:
                self.X = [self.csp.int_var(1, self.P, f"y[{c}]") for c in self.inst.courses]
                for c in range(self.C):
                    terms = [(p, self.B[c][p - 1]) for p in self.inst.periods] + [(-1, self.X[c])]
                    self.csp.linear(terms, "==", 0, "period-index")
        else:
            self.X = self.relation(marker=r.primary is Representation.MARKER_RELATION)
            self.B = self.bool_matrix(decision=False, exactly_one=r.channelling)
            self.link_reified(self.X, self.B, "channel" if r.channelling else "graph")

    # base constraints ------------------------------------------------
    def base(self) -> None:
        inst, csp = self.inst, self.csp
        for a, b in inst.prerequisite:
            csp.less(self.X[a - 1], self.X[b - 1], f"prerequisite({a},{b})")
        for p in range(self.P):
            col = [self.B[c][p] for c in range(self.C)]
            load = [(inst.course_load[c], col[c]) for c in range(self.C)]
            csp.linear(load, "<=", inst.load_per_period_ub, f"load_ub[{p + 1}]")
            csp.linear(load, ">=", inst.load_per_period_lb, f"load_lb[{p + 1}]")
            card = [(1, b) for b in col]
            csp.linear(card, "<=", inst.courses_per_period_ub, f"card_ub[{p + 1}]")
            csp.linear(card, ">=", inst.courses_per_period_lb, f"card_lb[{p + 1}]")

    # streamliners ----------------------------------------------------
    def infeasible(self, label: str) -> None:
        if self._false is None:
            self._false = self.csp.const(0, "false")
        self.csp.linear([(1, self._false)], ">=", 1, label)

    def side_for(self, prim) -> str:
        if isinstance(prim, RangeCount):
            return "bool"
        if self.recipe.side is Side.CHANNELLED_BEST:
            return "bool" if isinstance(prim, ValueCount) else "int"
        return "bool" if self.recipe.primary is Representation.BOOL_MATRIX else "int"

    def post(self, prim, label: str) -> None:
        if isinstance(prim, Constant):
            if not prim.value:
                self.infeasible(label)
            return
        side = self.side_for(prim)
        if isinstance(prim, ValueCount):
            (self._count_bool if side == "bool" else self._count_int)(prim, label)
        elif isinstance(prim, RangeCount):
            self._range(prim, label)
        elif isinstance(prim, Monotone):
            (self._monotone_bool if side == "bool" else self._monotone_int)(prim, label)
        elif isinstance(prim, Extremal):
            (self._extremal_bool if side == "bool" else self._extremal_int)(prim, label)
        else:
            raise TypeError(prim)

    def _count_bool(self, prim: ValueCount, label: str) -> None:
        n = len(prim.courses)
        inside = sorted(prim.values)
        outside = [p for p in self.inst.periods if p not in prim.values]
        if prim.lo > prim.hi or prim.lo > n or prim.hi < 0:
            self.infeasible(label)
            return
        if prim.lo == n:
            for c in prim.courses:
                if outside:
                    self.csp.linear([(1, self.B[c - 1][p - 1]) for p in outside], "<=", 0, label)
            return
        if prim.hi == 0:
            for c in prim.courses:
                if inside:
                    self.csp.linear([(1, self.B[c - 1][p - 1]) for p in inside], "<=", 0, label)
            return
        terms = [(1, self.B[c - 1][p - 1]) for c in prim.courses for p in inside]
        if prim.lo > 0:
            self.csp.linear(terms, ">=", prim.lo, label)
        if prim.hi < n:
            self.csp.linear(terms, "<=", prim.hi, label)

    def _count_int(self, prim: ValueCount, label: str) -> None:
        csp, P = self.csp, self.P
        n = len(prim.courses)
        values = sorted(prim.values)
        if prim.lo > prim.hi or prim.lo > n or prim.hi < 0:
            self.infeasible(label)
            return
        if not values or len(values) == P:
            count = n if values else 0
            if not prim.lo <= count <= prim.hi:
                self.infeasible(label)
            return
        interval = values[-1] - values[0] + 1 == len(values) and (values[0] == 1 or values[-1] == P)
        if interval:
            a, b = values[0], values[-1]
            if prim.lo == n or prim.hi == 0:
                for c in prim.courses:
                    x = self.X[c - 1]
                    if prim.lo == n:
                        csp.linear([(1, x)], ">=", a, label)
                        csp.linear([(1, x)], "<=", b, label)
                    elif a == 1:
                        csp.linear([(1, x)], ">=", b + 1, label)
                    else:
                        csp.linear([(1, x)], "<=", a - 1, label)
                return
            # half-interval indicator via big-M
            inds = []
            for c in prim.courses:
                x = self.X[c - 1]
                ind = csp.bool_var(f"in[{c}]")
                if a == 1:
                    csp.linear([(1, x), (P - b, ind)], "<=", P, label)
                    csp.linear([(1, x), (b, ind)], ">=", b + 1, label)
                else:
                    csp.linear([(1, x), (-(a - 1), ind)], ">=", 1, label)
                    csp.linear([(1, x), (-(P - a + 1), ind)], "<=", a - 1, label)
                inds.append(ind)
        else:
            parity = values[0] % 2
            if prim.lo == n or prim.hi == 0:
                r = parity if prim.lo == n else 1 - parity
                h_lo, h_hi = (1 - r + 1) // 2, (P - r) // 2
                for c in prim.courses:
                    if h_lo > h_hi:
                        self.infeasible(label)
                        return
                    h = csp.int_var(h_lo, h_hi, f"half[{c}]")
                    csp.linear([(1, self.X[c - 1]), (-2, h)], "==", r, label)
                return
            inds = []
            for c in prim.courses:
                h = csp.int_var(0, P // 2, f"half[{c}]")
                odd = csp.bool_var(f"odd[{c}]")
                csp.linear([(1, self.X[c - 1]), (-2, h), (-1, odd)], "==", 0, label)
                inds.append(odd)
            if parity == 0:
                # count of evens = n - sum(odd)
                lo, hi = n - prim.hi, n - prim.lo
                self._bounded_sum(inds, lo, hi, n, label)
                return
        self._bounded_sum(inds, prim.lo, prim.hi, n, label)

    def _bounded_sum(self, inds: list[int], lo: int, hi: int, n: int, label: str) -> None:
        terms = [(1, b) for b in inds]
        if lo > 0:
            self.csp.linear(terms, ">=", lo, label)
        if hi < n:
            self.csp.linear(terms, "<=", hi, label)

    def occurrences(self) -> list[int]:
        if self._occ is None:
            occ = []
            for p in range(self.P):
                o = self.csp.bool_var(f"occ[{p + 1}]")
                col = [self.B[c][p] for c in range(self.C)]
                for b in col:
                    self.csp.linear([(1, b), (-1, o)], "<=", 0, "occurrence")
                self.csp.linear([(1, o)] + [(-1, b) for b in col], "<=", 0, "occurrence")
                occ.append(o)
            self._occ = occ
        return self._occ

    def _range(self, prim: RangeCount, label: str) -> None:
        occ = self.occurrences()
        inside = [occ[p - 1] for p in self.inst.periods if p in prim.values]
        outside = [occ[p - 1] for p in self.inst.periods if p not in prim.values]
        csp = self.csp
        # R - 2K == sum(outside) - sum(inside)
        diff = [(1, o) for o in outside] + [(-1, o) for o in inside]
        q, k = prim.quantifier, prim.softness
        if q == "all":
            if outside:
                csp.linear([(1, o) for o in outside], "<=", 0, label)
        elif q == "half":
            if not diff:
                return
            csp.linear(diff, ">=", 0, label)
            csp.linear(diff, "<=", 1, label)
        elif q == "most":
            if outside:
                csp.linear([(1, o) for o in outside], "<=", k, label)
        elif q == "allBut":
            if len(outside) < k:
                self.infeasible(label)
            else:
                csp.linear([(1, o) for o in outside], "==", k, label)
        elif q == "approxHalf":
            h = csp.int_var(0, self.P // 2, "range-half")
            total = [(1, o) for o in occ]
            csp.linear(total + [(-2, h)], ">=", 0, label)
            csp.linear(total + [(-2, h)], "<=", 1, label)
            within = [(1, o) for o in inside] + [(-1, h)]
            csp.linear(within, ">=", -k, label)
            csp.linear(within, "<=", k, label)
        else:
            raise ValueError(q)

    def _monotone_int(self, prim: Monotone, label: str) -> None:
        for c in range(self.C - 1):
            a, b = self.X[c], self.X[c + 1]
            if prim.increasing:
                self.csp.linear([(1, a), (-1, b)], "<=", 0, label)
            else:
                self.csp.linear([(1, b), (-1, a)], "<=", 0, label)

    def _monotone_bool(self, prim: Monotone, label: str) -> None:
        # X[c] <= X[c+1]  <=>  for all p: [X[c+1] <= p] implies [X[c] <= p]
        for c in range(self.C - 1):
            early, late = (self.B[c], self.B[c + 1]) if prim.increasing else (self.B[c + 1], self.B[c])
            for p in range(self.P - 1):
                terms = [(1, late[q]) for q in range(p + 1)] + [(-1, early[q]) for q in range(p + 1)]
                self.csp.linear(terms, "<=", 0, label)

    def _extremal_int(self, prim: Extremal, label: str) -> None:
        pos = 0 if prim.first else self.C - 1
        for c in range(self.C):
            if c == pos:
                continue
            if prim.largest:
                self.csp.linear([(1, self.X[c]), (-1, self.X[pos])], "<=", 0, label)
            else:
                self.csp.linear([(1, self.X[pos]), (-1, self.X[c])], "<=", 0, label)

    def _extremal_bool(self, prim: Extremal, label: str) -> None:
        pos = 0 if prim.first else self.C - 1
        row = self.B[pos]
        for c in range(self.C):
            if c == pos:
                continue
            for p in range(self.P):
                span = range(p, self.P) if prim.largest else range(p + 1)
                terms = [(1, self.B[c][p])] + [(-1, row[q]) for q in span]
                self.csp.linear(terms, "<=", 0, label)


def compile_model(
    inst: BacpInstance,
    ss: StreamlinerSet,
    recipe: ModelRecipe,
    candidates: Sequence[Streamliner] | None = None,
) -> CompiledModel:
    """Encode the streamlined instance under one recipe as a kernel CSP."""
    candidates = candidates if candidates is not None else default_candidates()
    by_id = {s.id: s for s in candidates}
    missing = [sid for sid in ss if sid not in by_id]
    if missing:
        raise KeyError(f"unknown streamliner ids {missing}")
    b = _Builder(inst, recipe)
    b.build_views()
    b.base()
    for sid in ss:
        s = by_id[sid]
        for prim in streamliner_semantics(s, inst):
            b.post(prim, f"streamliner[{sid}]")
    return CompiledModel(
        csp=b.csp,
        instance_id=inst.id,
        streamliner_key=ss.key,
        heuristic=recipe.name,
        int_view=tuple(b.X),
        bool_view=tuple(tuple(r) for r in b.B),
    )

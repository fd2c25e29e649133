"""CSP construction and the flat array form shared by both search backends."""
from __future__ import annotations

from array import array
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

__all__ = [
    "Csp",
    "FlatCsp",
    "MalformedCsp",
    "SolveBudget",
    "SolveOutcome",
    "Status",
    "LIN_LE",
    "LIN_EQ",
    "REIF_EQ",
    "EXACTLY_ONE",
]

LIN_LE = 0
LIN_EQ = 1
REIF_EQ = 2
EXACTLY_ONE = 3

_KIND_NAMES = {LIN_LE: "linear<=", LIN_EQ: "linear=", REIF_EQ: "reified", EXACTLY_ONE: "exactly-one"}


class MalformedCsp(ValueError):
    pass


class Status(str, Enum):
    SAT = "SAT"
    UNSAT = "UNSAT"
    CAPPED = "CAPPED"


@dataclass(frozen=True)
class SolveBudget:
    max_nodes: int
    max_cost: int | None = None
    wall_clock_cap: float | None = None

    def __post_init__(self) -> None:
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be >= 1")

    @property
    def node_cap(self) -> int:
        if self.max_cost is None:
            return self.max_nodes
        return max(1, min(self.max_nodes, self.max_cost))


@dataclass(frozen=True)
class SolveOutcome:
    status: Status
    cost: int
    solution: tuple[int, ...] | None = None
    wall_time: float = field(default=0.0, compare=False)
    max_depth: int = 0
    solutions: tuple[tuple[int, ...], ...] | None = None

    @property
    def solved(self) -> bool:
        return self.status is not Status.CAPPED


@dataclass
class FlatCsp:
    """Immutable array view of a Csp, consumed by the search backends."""

    n_vars: int
    var_lo: array
    var_hi: array
    var_off: array
    var_decision: array
    n_values: int
    n_cons: int
    c_kind: array
    c_start: array
    c_end: array
    c_rhs: array
    t_coef: array
    t_var: array
    w_start: array
    w_cons: array


class Csp:
    """Mutable builder for a finite-domain CSP.

    Integer variables have contiguous initial domains; booleans are 0..1
    integers. Only ``decision`` variables are branched on before auxiliaries.
    """

    def __init__(self) -> None:
        self.names: list[str] = []
        self.lo: list[int] = []
        self.hi: list[int] = []
        self.decision: list[bool] = []
        # (kind, terms[(coef, var)], rhs, label)
        self.constraints: list[tuple[int, tuple[tuple[int, int], ...], int, str]] = []
        self._flat: FlatCsp | None = None

    # variables -------------------------------------------------------
    def int_var(self, lo: int, hi: int, name: str = "", decision: bool = False) -> int:
        if lo > hi:
            raise MalformedCsp(f"empty domain {lo}..{hi} for {name or 'variable'}")
        self.names.append(name or f"v{len(self.names)}")
        self.lo.append(int(lo))
        self.hi.append(int(hi))
        self.decision.append(bool(decision))
        self._flat = None
        return len(self.names) - 1

    def bool_var(self, name: str = "", decision: bool = False) -> int:
        return self.int_var(0, 1, name, decision)

    def const(self, value: int, name: str = "") -> int:
        return self.int_var(value, value, name or f"const{value}")

    @property
    def n_vars(self) -> int:
        return len(self.names)

    # constraints -----------------------------------------------------
    def _check(self, vars_: Iterable[int]) -> None:
        for v in vars_:
            if not isinstance(v, int) or not 0 <= v < len(self.names):
                raise MalformedCsp(f"dangling variable reference {v!r}")

    def _post(self, kind: int, terms: Sequence[tuple[int, int]], rhs: int, label: str) -> None:
        self._check(v for _, v in terms)
        self.constraints.append((kind, tuple((int(a), int(v)) for a, v in terms), int(rhs), label))
        self._flat = None

    def linear(self, terms: Sequence[tuple[int, int]], op: str, rhs: int, label: str = "") -> None:
        """Post ``sum(coef * var) op rhs`` with op in ``<=``, ``>=``, ``==``."""
        merged: dict[int, int] = {}
        for a, v in terms:
            merged[v] = merged.get(v, 0) + a
        terms = [(a, v) for v, a in merged.items() if a != 0]
        if op == "<=":
            self._post(LIN_LE, terms, rhs, label)
        elif op == ">=":
            self._post(LIN_LE, [(-a, v) for a, v in terms], -rhs, label)
        elif op in ("==", "="):
            self._post(LIN_EQ, terms, rhs, label)
        else:
            raise MalformedCsp(f"unknown linear operator {op!r}")

    def less(self, u: int, v: int, label: str = "") -> None:
        """Binary precedence ``u < v``."""
        self.linear([(1, u), (-1, v)], "<=", -1, label or "precedence")

    def reified_eq(self, b: int, x: int, k: int, label: str = "") -> None:
        """``b <=> (x == k)`` with b boolean."""
        self._post(REIF_EQ, [(1, b), (1, x)], k, label or "reified")

    def channel(self, bools: Sequence[int], x: int, values: Sequence[int], label: str = "") -> None:
        """``bools[i] <=> (x == values[i])`` for every i."""
        for b, k in zip(bools, values):
            self.reified_eq(b, x, k, label or "channel")

    def exactly_one(self, bools: Sequence[int], label: str = "") -> None:
        self._post(EXACTLY_ONE, [(1, b) for b in bools], 1, label or "exactly-one")

    # export ----------------------------------------------------------
    def freeze(self) -> FlatCsp:
        if self._flat is not None:
            return self._flat
        for kind, terms, _, label in self.constraints:
            if kind in (REIF_EQ, EXACTLY_ONE):
                for _, b in terms[: (1 if kind == REIF_EQ else len(terms))]:
                    if self.lo[b] < 0 or self.hi[b] > 1:
                        raise MalformedCsp(f"{label}: variable {self.names[b]} is not boolean")
        n = len(self.names)
        var_off = array("q")
        off = 0
        for lo, hi in zip(self.lo, self.hi):
            var_off.append(off)
            off += hi - lo + 1
        c_kind, c_start, c_end, c_rhs = array("q"), array("q"), array("q"), array("q")
        t_coef, t_var = array("q"), array("q")
        watchers: list[list[int]] = [[] for _ in range(n)]
        for k, (kind, terms, rhs, _) in enumerate(self.constraints):
            c_kind.append(kind)
            c_start.append(len(t_var))
            for a, v in terms:
                t_coef.append(a)
                t_var.append(v)
                if not watchers[v] or watchers[v][-1] != k:
                    watchers[v].append(k)
            c_end.append(len(t_var))
            c_rhs.append(rhs)
        w_start, w_cons = array("q"), array("q")
        for v in range(n):
            w_start.append(len(w_cons))
            w_cons.extend(watchers[v])
        w_start.append(len(w_cons))
        self._flat = FlatCsp(
            n_vars=n,
            var_lo=array("q", self.lo),
            var_hi=array("q", self.hi),
            var_off=var_off,
            var_decision=array("q", (1 if d else 0 for d in self.decision)),
            n_values=off,
            n_cons=len(self.constraints),
            c_kind=c_kind,
            c_start=c_start,
            c_end=c_end,
            c_rhs=c_rhs,
            t_coef=t_coef,
            t_var=t_var,
            w_start=w_start,
            w_cons=w_cons,
        )
        return self._flat

    def check(self, values: Sequence[int]) -> bool:
        """Evaluate every constraint on a full assignment."""
        for kind, terms, rhs, _ in self.constraints:
            if kind == LIN_LE:
                if sum(a * values[v] for a, v in terms) > rhs:
                    return False
            elif kind == LIN_EQ:
                if sum(a * values[v] for a, v in terms) != rhs:
                    return False
            elif kind == REIF_EQ:
                (_, b), (_, x) = terms
                if values[b] != int(values[x] == rhs):
                    return False
            elif sum(values[v] for _, v in terms) != 1:
                return False
        return all(lo <= x <= hi for lo, hi, x in zip(self.lo, self.hi, values))

    def listing(self) -> list[str]:
        """Human-readable dump, one line per variable and constraint."""
        lines = []
        for i, name in enumerate(self.names):
            tag = "find" if self.decision[i] else "aux"
            lines.append(f"var {name} in {self.lo[i]}..{self.hi[i]} ({tag})")
        for kind, terms, rhs, label in self.constraints:
            names = self.names
            if kind in (LIN_LE, LIN_EQ):
                lhs = " + ".join(f"{a}*{names[v]}" for a, v in terms) or "0"
                op = "<=" if kind == LIN_LE else "=="
                lines.append(f"{label}: {lhs} {op} {rhs}")
            elif kind == REIF_EQ:
                (_, b), (_, x) = terms
                lines.append(f"{label}: {names[b]} <-> {names[x]} == {rhs}")
            else:
                lines.append(f"{label}: exactly-one({', '.join(names[v] for _, v in terms)})")
        return lines

    def stats(self) -> dict[str, int]:
        out = {"variables": self.n_vars, "decision": sum(self.decision)}
        for kind, name in _KIND_NAMES.items():
            out[name] = sum(1 for c in self.constraints if c[0] == kind)
        return out
